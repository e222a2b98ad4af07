#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fvforge/classify.hpp"
#include "fvforge/eval.hpp"
#include "fvforge/fisher.hpp"
#include "fvforge/fusion.hpp"
#include "fvforge/gmm.hpp"
#include "fvforge/manifest.hpp"
#include "fvforge/normalize.hpp"

namespace fvforge {

enum class Scenario { softmax_fusion, global_pretrained, global_finetuned, local_fv, layer_fusion };
enum class PoolOrder { sum_then_normalize, normalize_then_sum };
enum class TddMode { channel, spatial, both };
enum class LayerFusion { features, scores };

Scenario parse_scenario(std::string_view s);
PoolOrder parse_pool_order(std::string_view s);
TddMode parse_tdd_mode(std::string_view s);
std::string_view to_string(Scenario s);

/// Fisher-vector post-processing switches.
struct FvSettings {
  bool intra = true;
  bool power = true;
  IntraBlocks intra_blocks = IntraBlocks::per_order;
  PoolOrder pool_order = PoolOrder::sum_then_normalize;
};

struct PipelineConfig {
  Scenario scenario = Scenario::local_fv;

  std::string softmax_layer = "softmax";
  std::string global_layer = "fc7";
  std::string local_layer = "conv5_3";

  FusionWeights score_weights;    // alpha, softmax fusion
  FusionWeights feature_weights;  // beta, feature concatenation
  LayerFusion layer_fusion = LayerFusion::features;
  double layer_global_weight = 1.0;
  double layer_local_weight = 1.0;

  PoolOrder pool_order = PoolOrder::sum_then_normalize;
  bool intra = true;
  bool power = true;
  IntraBlocks intra_blocks = IntraBlocks::per_order;
  TddMode tdd_mode = TddMode::both;
  double tdd_epsilon = kNormEpsilon;
  std::size_t pca_dim = 64;
  GmmOptions gmm;
  SvmOptions svm;
  Integration integration = Integration::step;

  // Test-time view geometry used upstream when the activations were produced.
  std::vector<std::size_t> scales{256, 384, 512};
  std::size_t crop = 224;
  bool flips = true;

  FvSettings fv_settings() const { return {intra, power, intra_blocks, pool_order}; }
};

/// INI-style text: `[section]` headers and `key = value` lines.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);
std::string default_config_text();

// ---- stages shared by the pipeline and the individual CLI subcommands ----

FeatureMap tdd_transform(const FeatureMap& map, Provenance mode, double epsilon);

/// Per-view vectors of one image pooled and l2-normalized in the configured
/// order.
GlobalVector pool_global(std::span<const GlobalVector> views, PoolOrder order);

/// Encodes each view, then pools and normalizes according to `settings`.
/// With normalize_then_sum the pooled vector is l2-normalized once more
/// when power normalization is on.
FisherVector encode_image(const GmmModel& gmm, std::span<const DescriptorSet> views,
                          const FvSettings& settings);

/// Concatenation of two representations followed by an l2 normalization
/// (used to join the channel and spatial Fisher vectors).
GlobalVector join_normalized(std::span<const double> first, std::span<const double> second);

// ---- scenarios ----

struct RunResult {
  EvalReport report;
  ScoreTable scores;
};

/// Softmax outputs pooled over views and fused by stream weights.
RunResult run_scenario1(const Manifest& manifest, const PipelineConfig& config);

/// fc-layer activations: pooled, l2-normalized, stream-concatenated, SVM.
/// Models and features are written beneath `work_dir`.
RunResult run_global(const Manifest& manifest, const PipelineConfig& config,
                     const std::filesystem::path& work_dir);

/// conv-layer activations: TDD, PCA, GMM and Fisher encoding per stream.
/// PCA and GMM see training-split descriptors only.
RunResult run_local_fv(const Manifest& manifest, const PipelineConfig& config,
                       const std::filesystem::path& work_dir);

/// Global and local representations combined at feature or score level.
RunResult run_layer_fusion(const Manifest& manifest, const PipelineConfig& config,
                           const std::filesystem::path& work_dir);

/// Dispatches on config.scenario and writes report.csv, summary.txt and
/// scores.csv into `out_dir`.
RunResult run_pipeline(const Manifest& manifest, const PipelineConfig& config,
                       const std::filesystem::path& out_dir);

// ---- feature list files ----

/// `image_id<TAB>label_or_-1<TAB>train|test<TAB>path`, one line per image.
struct FeatureListEntry {
  std::string image_id;
  long label = -1;
  Split split = Split::train;
  std::filesystem::path path;
};

std::vector<FeatureListEntry> load_feature_list(const std::filesystem::path& path);
void save_feature_list(const std::vector<FeatureListEntry>& entries,
                       const std::filesystem::path& path);

}  // namespace fvforge
