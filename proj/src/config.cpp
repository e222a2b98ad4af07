#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "fvforge/error.hpp"
#include "fvforge/pipeline.hpp"

namespace fvforge {

namespace {

namespace pt = boost::property_tree;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    out.push_back(b == std::string::npos ? "" : item.substr(b, e - b + 1));
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::logic_error&) {
  }
  fail(ErrorKind::validation, "config: '" + key + "' expects a number, got '" + v + "'");
}

std::size_t to_count(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  require(d >= 0 && d == static_cast<double>(static_cast<std::size_t>(d)), ErrorKind::validation,
          "config: '" + key + "' expects a nonnegative integer");
  return static_cast<std::size_t>(d);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(ErrorKind::validation, "config: '" + key + "' expects true or false");
}

std::pair<double, double> to_pair(const std::string& key, const std::string& v) {
  const auto parts = split_list(v);
  require(parts.size() == 2, ErrorKind::validation, "config: '" + key + "' expects two numbers");
  return {to_double(key, parts[0]), to_double(key, parts[1])};
}

}  // namespace

Scenario parse_scenario(std::string_view s) {
  if (s == "softmax_fusion") return Scenario::softmax_fusion;
  if (s == "global_pretrained") return Scenario::global_pretrained;
  if (s == "global_finetuned") return Scenario::global_finetuned;
  if (s == "local_fv") return Scenario::local_fv;
  if (s == "layer_fusion") return Scenario::layer_fusion;
  fail(ErrorKind::validation, "unknown scenario '" + std::string(s) + "'");
}

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::softmax_fusion: return "softmax_fusion";
    case Scenario::global_pretrained: return "global_pretrained";
    case Scenario::global_finetuned: return "global_finetuned";
    case Scenario::local_fv: return "local_fv";
    case Scenario::layer_fusion: return "layer_fusion";
  }
  return "?";
}

PoolOrder parse_pool_order(std::string_view s) {
  if (s == "sum_then_normalize") return PoolOrder::sum_then_normalize;
  if (s == "normalize_then_sum") return PoolOrder::normalize_then_sum;
  fail(ErrorKind::validation, "unknown pool order '" + std::string(s) + "'");
}

TddMode parse_tdd_mode(std::string_view s) {
  if (s == "channel") return TddMode::channel;
  if (s == "spatial") return TddMode::spatial;
  if (s == "both") return TddMode::both;
  fail(ErrorKind::validation, "unknown tdd mode '" + std::string(s) + "'");
}

PipelineConfig parse_config(const std::string& text) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorKind::validation, std::string("config: ") + e.what());
  }

  PipelineConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty()) fail(ErrorKind::validation, "config: key '" + section + "' outside a section");
    for (const auto& [name, node] : body) {
      const std::string key = section + "." + name;
      const std::string v = node.get_value<std::string>();
      if (key == "pipeline.scenario") c.scenario = parse_scenario(v);
      else if (key == "pipeline.pool_order") c.pool_order = parse_pool_order(v);
      else if (key == "layers.softmax") c.softmax_layer = v;
      else if (key == "layers.global") c.global_layer = v;
      else if (key == "layers.local") c.local_layer = v;
      else if (key == "fusion.alpha") {
        const auto [o, s] = to_pair(key, v);
        c.score_weights = FusionWeights(o, s);
      } else if (key == "fusion.beta") {
        const auto [o, s] = to_pair(key, v);
        c.feature_weights = FusionWeights(o, s);
      } else if (key == "fusion.layer_mode") {
        if (v == "features") c.layer_fusion = LayerFusion::features;
        else if (v == "scores") c.layer_fusion = LayerFusion::scores;
        else fail(ErrorKind::validation, "config: fusion.layer_mode must be features or scores");
      } else if (key == "fusion.layer_weights") {
        const auto [g, l] = to_pair(key, v);
        FusionWeights check(g, l);
        c.layer_global_weight = check.object_weight;
        c.layer_local_weight = check.scene_weight;
      } else if (key == "tdd.mode") c.tdd_mode = parse_tdd_mode(v);
      else if (key == "tdd.epsilon") c.tdd_epsilon = to_double(key, v);
      else if (key == "pca.dim") c.pca_dim = to_count(key, v);
      else if (key == "gmm.k") c.gmm.components = to_count(key, v);
      else if (key == "gmm.seed") c.gmm.seed = to_count(key, v);
      else if (key == "gmm.max_iters") c.gmm.max_iters = to_count(key, v);
      else if (key == "gmm.tol") c.gmm.tol = to_double(key, v);
      else if (key == "gmm.variance_floor") c.gmm.variance_floor = to_double(key, v);
      else if (key == "gmm.weight_floor") c.gmm.weight_floor = to_double(key, v);
      else if (key == "gmm.max_descriptors") c.gmm.max_descriptors = to_count(key, v);
      else if (key == "fisher.intra") c.intra = to_bool(key, v);
      else if (key == "fisher.power") c.power = to_bool(key, v);
      else if (key == "fisher.intra_blocks") {
        if (v == "per_order") c.intra_blocks = IntraBlocks::per_order;
        else if (v == "per_gaussian") c.intra_blocks = IntraBlocks::per_gaussian;
        else fail(ErrorKind::validation, "config: fisher.intra_blocks must be per_order or per_gaussian");
      } else if (key == "svm.c") c.svm.c = to_double(key, v);
      else if (key == "svm.seed") c.svm.seed = to_count(key, v);
      else if (key == "svm.max_epochs") c.svm.max_epochs = to_count(key, v);
      else if (key == "svm.tol") c.svm.tol = to_double(key, v);
      else if (key == "eval.integration") {
        if (v == "step") c.integration = Integration::step;
        else if (v == "trapezoid") c.integration = Integration::trapezoid;
        else fail(ErrorKind::validation, "config: eval.integration must be step or trapezoid");
      } else if (key == "augment.scales") {
        c.scales.clear();
        for (const auto& s : split_list(v)) c.scales.push_back(to_count(key, s));
      } else if (key == "augment.crop") c.crop = to_count(key, v);
      else if (key == "augment.flips") c.flips = to_bool(key, v);
      else fail(ErrorKind::validation, "config: unknown key '" + key + "'");
    }
  }
  require(c.pca_dim > 0, ErrorKind::validation, "config: pca.dim must be positive");
  require(c.gmm.components > 0, ErrorKind::validation, "config: gmm.k must be positive");
  require(c.gmm.tol > 0 && c.gmm.max_iters > 0, ErrorKind::validation,
          "config: gmm.tol and gmm.max_iters must be positive");
  require(c.svm.c > 0 && c.svm.tol > 0 && c.svm.max_epochs > 0, ErrorKind::validation,
          "config: svm.c, svm.tol and svm.max_epochs must be positive");
  require(c.tdd_epsilon > 0, ErrorKind::validation, "config: tdd.epsilon must be positive");
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_text(path));
}

std::string default_config_text() {
  return R"(# fvforge pipeline defaults
[pipeline]
scenario = layer_fusion
pool_order = sum_then_normalize

[layers]
softmax = softmax
global = fc7
local = conv5_3

[fusion]
# object, scene
alpha = 1,1
beta = 1,1
# global (fc) block first, then local (conv) block
layer_mode = features
layer_weights = 1,1

[tdd]
mode = both
epsilon = 1e-12

[pca]
dim = 64

[gmm]
k = 256
seed = 7
max_iters = 100
tol = 1e-5
variance_floor = 1e-4
weight_floor = 1e-6
max_descriptors = 500000

[fisher]
intra = true
power = true
intra_blocks = per_order

[svm]
c = 1
seed = 7
max_epochs = 1000
tol = 1e-3

[eval]
integration = step

[augment]
scales = 256,384,512
crop = 224
flips = true
)";
}

}  // namespace fvforge
