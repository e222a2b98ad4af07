#include "fvforge/cli.hpp"

#include <unistd.h>

#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "fvforge/augment.hpp"
#include "fvforge/classify.hpp"
#include "fvforge/eval.hpp"
#include "fvforge/fisher.hpp"
#include "fvforge/fusion.hpp"
#include "fvforge/gmm.hpp"
#include "fvforge/log.hpp"
#include "fvforge/manifest.hpp"
#include "fvforge/normalize.hpp"
#include "fvforge/pca.hpp"
#include "fvforge/pipeline.hpp"
#include "fvforge/synth.hpp"

namespace fvforge {

namespace fs = std::filesystem;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage:
    case ErrorKind::parameter: return kExitUsage;
    case ErrorKind::numeric: return kExitNumeric;
    case ErrorKind::shape:
    case ErrorKind::format:
    case ErrorKind::corruption:
    case ErrorKind::data:
    case ErrorKind::validation:
    case ErrorKind::io: return kExitData;
  }
  return kExitData;
}

namespace {

fs::path clean_dir(const std::string& s) {
  fs::path p = fs::path(s).lexically_normal();
  if (p.filename().empty()) p = p.parent_path();
  require(!p.empty(), ErrorKind::usage, "output directory must not be empty");
  return p;
}

/// Builds an output directory in a sibling temp dir, then moves each produced
/// entry into `out`, replacing same-named entries only.
template <class Fn>
void publish_dir(const fs::path& out, Fn&& fill) {
  const fs::path tmp = out.parent_path() / ("." + out.filename().string() + ".tmp-" +
                                            std::to_string(::getpid()));
  std::error_code ec;
  fs::remove_all(tmp, ec);
  try {
    fs::create_directories(tmp);
    fill(tmp);
    fs::create_directories(out);
    for (const auto& item : fs::directory_iterator(tmp)) {
      const fs::path target = out / item.path().filename();
      fs::remove_all(target);
      fs::rename(item.path(), target);
    }
  } catch (const fs::filesystem_error& e) {
    fs::remove_all(tmp, ec);
    fail(ErrorKind::io, e.what());
  } catch (...) {
    fs::remove_all(tmp, ec);
    throw;
  }
  fs::remove_all(tmp, ec);
}

std::vector<fs::path> gather_inputs(const std::vector<std::string>& in, const std::string& list) {
  std::vector<fs::path> out(in.begin(), in.end());
  if (!list.empty()) {
    std::istringstream lines(read_text(list));
    std::string line;
    while (std::getline(lines, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      fs::path p(line);
      out.push_back(p.is_relative() ? fs::path(list).parent_path() / p : p);
    }
  }
  require(!out.empty(), ErrorKind::usage, "no input files given");
  return out;
}

DescriptorSet read_all_descriptors(const std::vector<fs::path>& paths) {
  std::vector<DescriptorSet> sets;
  for (const auto& p : paths) sets.push_back(read_descriptors(p));
  return concat(sets);
}

std::vector<GlobalVector> read_vectors(const std::vector<std::string>& paths) {
  std::vector<GlobalVector> out;
  for (const auto& p : paths) out.push_back(read_global_vector(p));
  return out;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(item);
  return out;
}

struct Bank {
  std::vector<FeatureListEntry> entries;
  DenseMatrix x;
};

Bank read_bank(const fs::path& list, std::optional<Split> split, bool labeled_only) {
  Bank b;
  std::vector<std::vector<double>> rows;
  for (auto& e : load_feature_list(list)) {
    if (split && e.split != *split) continue;
    if (labeled_only && e.label < 0) continue;
    const GlobalVector v = read_global_vector(e.path);
    require(rows.empty() || v.dim() == rows.front().size(), ErrorKind::shape,
            e.path.string() + ": feature dim differs from earlier entries");
    rows.emplace_back(v.values().begin(), v.values().end());
    b.entries.push_back(std::move(e));
  }
  if (!rows.empty()) {
    b.x = DenseMatrix(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      std::copy(rows[i].begin(), rows[i].end(), b.x.row(i).begin());
  }
  return b;
}

std::optional<Split> parse_split(const std::string& s) {
  if (s == "all") return std::nullopt;
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  fail(ErrorKind::usage, "--split must be all, train or test");
}

Integration parse_integration(const std::string& s) {
  if (s == "step") return Integration::step;
  if (s == "trapezoid") return Integration::trapezoid;
  fail(ErrorKind::usage, "--integration must be step or trapezoid");
}

IntraBlocks parse_blocks(const std::string& s) {
  if (s == "per_order") return IntraBlocks::per_order;
  if (s == "per_gaussian") return IntraBlocks::per_gaussian;
  fail(ErrorKind::usage, "--intra-blocks must be per_order or per_gaussian");
}

FusionWeights parse_weights(const std::string& s) {
  const auto parts = split_csv(s);
  require(parts.size() == 2, ErrorKind::usage, "weights take two comma-separated numbers");
  try {
    return FusionWeights(std::stod(parts[0]), std::stod(parts[1]));
  } catch (const std::logic_error&) {
    fail(ErrorKind::usage, "weights take two comma-separated numbers");
  }
}

void write_output(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") std::cout << text;
  else write_text_atomic(out, text);
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"fvforge: Fisher-vector aggregation of two-stream CNN activations", "fvforge"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (0: machine parallelism)")
      ->check(CLI::NonNegativeNumber);

  std::function<void()> action;

  // plan-views
  std::size_t pv_w = 0, pv_h = 0, pv_crop = 224;
  std::vector<std::size_t> pv_scales{256, 384, 512};
  bool pv_no_flips = false;
  std::string pv_out;
  auto* pv = app.add_subcommand("plan-views", "list the crop geometry of the test-time views");
  pv->add_option("--width", pv_w, "image width")->required();
  pv->add_option("--height", pv_h, "image height")->required();
  pv->add_option("--scales", pv_scales, "smallest-side scales")->delimiter(',')->capture_default_str();
  pv->add_option("--crop", pv_crop, "square crop size")->capture_default_str();
  pv->add_flag("--no-flips", pv_no_flips, "omit horizontally flipped views");
  pv->add_option("--out", pv_out, "CSV output (default stdout)");
  pv->callback([&] {
    action = [&] {
      const ViewPlan plan = plan_views(pv_w, pv_h, pv_scales, pv_crop, !pv_no_flips);
      write_output(pv_out, views_to_csv(plan));
      log_kv({{"stage", "plan-views"}, {"views", std::to_string(plan.views.size())}});
    };
  });

  // tdd
  std::string tdd_mode, tdd_in, tdd_out, tdd_out_spatial;
  double tdd_eps = kNormEpsilon;
  auto* tdd = app.add_subcommand("tdd", "normalize a conv map and extract its local descriptors");
  tdd->add_option("--mode", tdd_mode, "channel, spatial or both")
      ->required()
      ->check(CLI::IsMember({"channel", "spatial", "both"}));
  tdd->add_option("--in", tdd_in, "feature map tensor")->required();
  tdd->add_option("--out", tdd_out, "descriptor tensor (channel set for --mode both)")->required();
  tdd->add_option("--out-spatial", tdd_out_spatial, "spatial descriptor tensor for --mode both");
  tdd->add_option("--epsilon", tdd_eps, "normalization floor")->capture_default_str();
  tdd->callback([&] {
    action = [&] {
      require(tdd_mode == "both" || tdd_out_spatial.empty(), ErrorKind::usage,
              "--out-spatial only applies to --mode both");
      require(tdd_mode != "both" || !tdd_out_spatial.empty(), ErrorKind::usage,
              "--mode both needs --out-spatial");
      const FeatureMap map = read_feature_map(tdd_in);
      std::vector<std::pair<Provenance, std::string>> jobs;
      if (tdd_mode != "spatial") jobs.emplace_back(Provenance::channel_norm, tdd_out);
      if (tdd_mode == "spatial") jobs.emplace_back(Provenance::spatial_norm, tdd_out);
      if (tdd_mode == "both") jobs.emplace_back(Provenance::spatial_norm, tdd_out_spatial);
      for (const auto& [mode, path] : jobs) {
        const DescriptorSet d = extract_descriptors(tdd_transform(map, mode, tdd_eps), mode);
        write_descriptors(d, path);
        log_kv({{"stage", "tdd"}, {"mode", std::string(to_string(mode))},
                {"descriptors", std::to_string(d.size())}, {"dim", std::to_string(d.dim())}});
      }
    };
  });

  // fit-pca
  std::vector<std::string> fp_in;
  std::string fp_list, fp_out;
  std::size_t fp_dim = 64;
  auto* fp = app.add_subcommand("fit-pca", "fit a PCA projection on descriptor files");
  fp->add_option("--dim", fp_dim, "output dimension")->capture_default_str();
  fp->add_option("--in", fp_in, "descriptor tensors, stacked in order");
  fp->add_option("--in-list", fp_list, "file with one descriptor path per line");
  fp->add_option("--out", fp_out, "model directory")->required();
  fp->callback([&] {
    action = [&] {
      const DescriptorSet all = read_all_descriptors(gather_inputs(fp_in, fp_list));
      const PcaModel model = fit_pca(all, fp_dim);
      publish_dir(clean_dir(fp_out), [&](const fs::path& dir) { save_pca(model, dir); });
      log_kv({{"stage", "fit-pca"}, {"descriptors", std::to_string(all.size())},
              {"input_dim", std::to_string(model.input_dim())},
              {"output_dim", std::to_string(model.output_dim())}});
    };
  });

  // apply-pca
  std::string ap_model, ap_in, ap_out;
  auto* ap = app.add_subcommand("apply-pca", "project descriptors with a fitted PCA model");
  ap->add_option("--model", ap_model, "model directory")->required();
  ap->add_option("--in", ap_in, "descriptor tensor")->required();
  ap->add_option("--out", ap_out, "projected descriptor tensor")->required();
  ap->callback([&] {
    action = [&] {
      const DescriptorSet d = project(load_pca(ap_model), read_descriptors(ap_in));
      write_descriptors(d, ap_out);
      log_kv({{"stage", "apply-pca"}, {"descriptors", std::to_string(d.size())},
              {"dim", std::to_string(d.dim())}});
    };
  });

  // fit-gmm
  GmmOptions gopt;
  std::vector<std::string> fg_in;
  std::string fg_list, fg_out;
  auto* fg = app.add_subcommand("fit-gmm", "fit a diagonal GMM vocabulary with EM");
  fg->add_option("--k", gopt.components, "components")->capture_default_str();
  fg->add_option("--seed", gopt.seed, "random seed")->capture_default_str();
  fg->add_option("--max-iters", gopt.max_iters, "EM iteration cap")->capture_default_str();
  fg->add_option("--tol", gopt.tol, "minimum gain in average log-likelihood")->capture_default_str();
  fg->add_option("--variance-floor", gopt.variance_floor, "fraction of global variance")
      ->capture_default_str();
  fg->add_option("--weight-floor", gopt.weight_floor, "component reset threshold")
      ->capture_default_str();
  fg->add_option("--max-descriptors", gopt.max_descriptors, "subsample cap")->capture_default_str();
  fg->add_option("--in", fg_in, "descriptor tensors");
  fg->add_option("--in-list", fg_list, "file with one descriptor path per line");
  fg->add_option("--out", fg_out, "model directory")->required();
  fg->callback([&] {
    action = [&] {
      const DescriptorSet all = read_all_descriptors(gather_inputs(fg_in, fg_list));
      const GmmFit fit = fit_gmm(all, gopt);
      publish_dir(clean_dir(fg_out), [&](const fs::path& dir) { save_gmm(fit.model, dir); });
    };
  });

  // encode-fv
  std::string ef_gmm, ef_out, ef_blocks = "per_order", ef_order = "sum_then_normalize";
  std::vector<std::string> ef_in;
  std::string ef_norm = "intra,power";
  auto* ef = app.add_subcommand("encode-fv", "Fisher-encode the views of one image");
  ef->add_option("--gmm", ef_gmm, "GMM model directory")->required();
  ef->add_option("--in", ef_in, "descriptor tensor per view")->required();
  ef->add_option("--out", ef_out, "Fisher vector tensor")->required();
  ef->add_option("--norm", ef_norm, "comma list of intra, power (or none)")->capture_default_str();
  ef->add_option("--intra-blocks", ef_blocks, "per_order or per_gaussian")->capture_default_str();
  ef->add_option("--pool-order", ef_order, "sum_then_normalize or normalize_then_sum")
      ->capture_default_str();
  ef->callback([&] {
    action = [&] {
      bool intra = false, power = false;
      for (const auto& n : split_csv(ef_norm)) {
        if (n == "intra") intra = true;
        else if (n == "power") power = true;
        else require(n == "none", ErrorKind::usage, "--norm takes intra, power or none");
      }
      const FvSettings s{intra, power, parse_blocks(ef_blocks),
                         parse_pool_order(ef_order)};
      const GmmModel gmm = load_gmm(ef_gmm);
      std::vector<DescriptorSet> views;
      for (const auto& p : ef_in) views.push_back(read_descriptors(p));
      const FisherVector fv = encode_image(gmm, views, s);
      write_tensor(fv.to_global(), ef_out);
      log_kv({{"stage", "encode-fv"}, {"views", std::to_string(views.size())},
              {"dim", std::to_string(fv.size())}});
    };
  });

  // fuse
  std::string fu_mode = "features", fu_weights = "1,1", fu_out, fu_order = "sum_then_normalize";
  std::vector<std::string> fu_first, fu_second;
  bool fu_pool = false, fu_l2 = false;
  auto* fu = app.add_subcommand("fuse", "combine two streams at score or feature level");
  fu->add_option("--mode", fu_mode, "scores or features")
      ->check(CLI::IsMember({"scores", "features"}))
      ->capture_default_str();
  fu->add_option("--object,--first", fu_first, "first-stream tensors (one per view)")->required();
  fu->add_option("--scene,--second", fu_second, "second-stream tensors (one per view)")->required();
  fu->add_option("--weights,--alpha,--beta", fu_weights, "stream weights w1,w2")->capture_default_str();
  fu->add_flag("--pool", fu_pool, "features: pool and l2-normalize each stream's views first");
  fu->add_option("--pool-order", fu_order, "order used by --pool")->capture_default_str();
  fu->add_flag("--l2", fu_l2, "features: l2-normalize the concatenation");
  fu->add_option("--out", fu_out, "output tensor")->required();
  fu->callback([&] {
    action = [&] {
      const FusionWeights w = parse_weights(fu_weights);
      const auto a = read_vectors(fu_first);
      const auto b = read_vectors(fu_second);
      std::vector<double> out;
      if (fu_mode == "scores") {
        const GlobalVector sa = sum_pool(a), sb = sum_pool(b);
        out = fuse_scores(ScoreVector{{sa.values().begin(), sa.values().end()}},
                          ScoreVector{{sb.values().begin(), sb.values().end()}}, w)
                  .scores;
      } else {
        const PoolOrder order = parse_pool_order(fu_order);
        require(fu_pool || (a.size() == 1 && b.size() == 1), ErrorKind::usage,
                "several views per stream need --pool");
        const GlobalVector va = fu_pool ? pool_global(a, order) : a.front();
        const GlobalVector vb = fu_pool ? pool_global(b, order) : b.front();
        out = concat_features(va.values(), vb.values(), w).values;
        if (fu_l2) l2_normalize_inplace(out);
      }
      write_tensor(GlobalVector(out), fu_out);
      log_kv({{"stage", "fuse"}, {"mode", fu_mode}, {"dim", std::to_string(out.size())}});
    };
  });

  // train-svm
  SvmOptions sopt;
  std::string ts_features, ts_classes, ts_manifest, ts_out;
  auto* ts = app.add_subcommand("train-svm", "train one-vs-rest linear SVMs on training features");
  ts->add_option("--features", ts_features, "feature list (id, label, split, path)")->required();
  ts->add_option("--classes", ts_classes, "comma-separated class names");
  ts->add_option("--manifest", ts_manifest, "take class names from a manifest");
  ts->add_option("--c", sopt.c, "regularization C")->capture_default_str();
  ts->add_option("--seed", sopt.seed, "shuffle seed")->capture_default_str();
  ts->add_option("--max-epochs", sopt.max_epochs, "epoch cap")->capture_default_str();
  ts->add_option("--tol", sopt.tol, "projected-gradient tolerance")->capture_default_str();
  ts->add_option("--out", ts_out, "model directory")->required();
  ts->callback([&] {
    action = [&] {
      require(ts_classes.empty() != ts_manifest.empty(), ErrorKind::usage,
              "give exactly one of --classes or --manifest");
      const auto names =
          ts_classes.empty() ? load_manifest(ts_manifest).class_names : split_csv(ts_classes);
      const Bank bank = read_bank(ts_features, Split::train, true);
      require(bank.x.rows > 0, ErrorKind::validation, "no labeled training features");
      std::vector<std::size_t> labels;
      for (const auto& e : bank.entries) {
        require(static_cast<std::size_t>(e.label) < names.size(), ErrorKind::validation,
                e.image_id + ": label out of range");
        labels.push_back(static_cast<std::size_t>(e.label));
      }
      const TrainResult r = train_ovr(bank.x, labels, names, sopt);
      publish_dir(clean_dir(ts_out), [&](const fs::path& dir) { save_linear_model(r.model, dir); });
    };
  });

  // predict
  std::string pr_model, pr_features, pr_split = "all", pr_out;
  auto* pr = app.add_subcommand("predict", "score features with a trained model");
  pr->add_option("--model", pr_model, "SVM model directory")->required();
  pr->add_option("--in,--features", pr_features, "feature list")->required();
  pr->add_option("--split", pr_split, "all, train or test")->capture_default_str();
  pr->add_option("--out", pr_out, "score CSV (default stdout)");
  pr->callback([&] {
    action = [&] {
      const LinearModel model = load_linear_model(pr_model);
      const Bank bank = read_bank(pr_features, parse_split(pr_split), false);
      ScoreTable t;
      for (const auto& e : bank.entries) t.image_ids.push_back(e.image_id);
      t.scores = bank.x.rows ? predict_scores(model, bank.x) : DenseMatrix(0, model.class_count());
      write_output(pr_out, score_table_csv(t));
      log_kv({{"stage", "predict"}, {"images", std::to_string(t.image_ids.size())}});
    };
  });

  // evaluate
  std::string ev_scores, ev_manifest, ev_out, ev_integration = "step";
  auto* ev = app.add_subcommand("evaluate", "per-class AP, mAP and top-1 accuracy");
  ev->add_option("--scores", ev_scores, "score CSV")->required();
  ev->add_option("--manifest", ev_manifest, "manifest with ground-truth labels");
  ev->add_option("--integration", ev_integration, "step or trapezoid")->capture_default_str();
  ev->add_option("--out", ev_out, "report CSV");
  ev->callback([&] {
    action = [&] {
      const ScoreTable table = read_score_table(ev_scores);
      require(!ev_manifest.empty(), ErrorKind::usage, "--manifest is required");
      const Manifest m = load_manifest(ev_manifest);
      std::map<std::string, std::optional<std::size_t>> truth;
      for (const auto& e : m.entries) truth[e.image_id] = e.label;
      std::vector<std::size_t> rows, labels;
      for (std::size_t i = 0; i < table.image_ids.size(); ++i) {
        const auto it = truth.find(table.image_ids[i]);
        require(it != truth.end(), ErrorKind::validation,
                "image " + table.image_ids[i] + " is not in the manifest");
        if (!it->second) continue;
        rows.push_back(i);
        labels.push_back(*it->second);
      }
      DenseMatrix s(rows.size(), table.scores.cols);
      for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy(table.scores.row(rows[r]).begin(), table.scores.row(rows[r]).end(),
                  s.row(r).begin());
      const EvalReport report = evaluate(s, labels, m.class_names, parse_integration(ev_integration));
      if (!ev_out.empty()) write_text_atomic(ev_out, report_csv(report));
      std::cout << summary_line(report) << '\n';
    };
  });

  // run
  std::string rn_config, rn_manifest, rn_out;
  auto* rn = app.add_subcommand("run", "run a whole scenario from a config and a manifest");
  rn->add_option("--config", rn_config, "pipeline config (default: built-in defaults)");
  rn->add_option("--manifest", rn_manifest, "manifest")->required();
  rn->add_option("--out", rn_out, "output directory")->required();
  rn->callback([&] {
    action = [&] {
      const PipelineConfig cfg =
          rn_config.empty() ? parse_config(default_config_text()) : load_config(rn_config);
      const Manifest m = load_manifest(rn_manifest);
      std::string summary;
      publish_dir(clean_dir(rn_out), [&](const fs::path& dir) {
        summary = summary_line(run_pipeline(m, cfg, dir).report);
      });
      std::cout << summary << '\n';
    };
  });

  // synth
  SynthOptions so;
  std::string sy_out;
  auto* sy = app.add_subcommand("synth", "write a seeded synthetic activation set and manifest");
  sy->add_option("--classes", so.classes, "class count")->capture_default_str();
  sy->add_option("--images-per-class", so.train_per_class, "training images per class")
      ->capture_default_str();
  sy->add_option("--test-per-class", so.test_per_class, "test images per class")->capture_default_str();
  sy->add_option("--views", so.views, "views per image")->capture_default_str();
  sy->add_option("--seed", so.seed, "random seed")->capture_default_str();
  sy->add_option("--fc-dim", so.fc_dim, "fc vector length")->capture_default_str();
  sy->add_option("--map-size", so.map_size, "conv map side")->capture_default_str();
  sy->add_option("--channels", so.channels, "conv channels")->capture_default_str();
  sy->add_option("--noise", so.noise, "noise level")->capture_default_str();
  sy->add_option("--out", sy_out, "output directory")->required();
  sy->callback([&] {
    action = [&] {
      publish_dir(clean_dir(sy_out), [&](const fs::path& dir) { synthesize(so, dir); });
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return kExitUsage;
  }

  try {
    set_thread_count(threads);
    if (action) action();
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << "fvforge: " << to_string(e.kind()) << " error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::bad_alloc&) {
    std::cerr << "fvforge: out of memory\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "fvforge: io error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace fvforge
