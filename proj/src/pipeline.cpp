#include "fvforge/pipeline.hpp"

#include <fstream>
#include <sstream>

#include "fvforge/augment.hpp"
#include "fvforge/error.hpp"
#include "fvforge/log.hpp"
#include "fvforge/pca.hpp"

namespace fvforge {

namespace fs = std::filesystem;

FeatureMap tdd_transform(const FeatureMap& map, Provenance mode, double epsilon) {
  switch (mode) {
    case Provenance::channel_norm: return channel_normalize(map, epsilon);
    case Provenance::spatial_norm: return spatial_normalize(map, epsilon);
    case Provenance::raw: return map;
  }
  return map;
}

GlobalVector pool_global(std::span<const GlobalVector> views, PoolOrder order) {
  if (order == PoolOrder::sum_then_normalize) return l2_normalize(sum_pool(views));
  std::vector<GlobalVector> normed;
  normed.reserve(views.size());
  for (const auto& v : views) normed.push_back(l2_normalize(v));
  return l2_normalize(sum_pool(normed));
}

namespace {

FisherVector post_normalize(FisherVector fv, const FvSettings& s) {
  if (s.intra) fv = intra_normalize(fv, s.intra_blocks);
  if (s.power) fv = power_l2_normalize(fv);
  return fv;
}

}  // namespace

FisherVector encode_image(const GmmModel& gmm, std::span<const DescriptorSet> views,
                          const FvSettings& settings) {
  require(!views.empty(), ErrorKind::parameter, "encode_image: no views");
  std::vector<FisherVector> encoded;
  encoded.reserve(views.size());
  for (const auto& v : views) {
    encoded.push_back(encode_fv(gmm, v));
    if (settings.pool_order == PoolOrder::normalize_then_sum)
      encoded.back() = post_normalize(std::move(encoded.back()), settings);
  }
  FisherVector pooled = sum_pool(encoded);
  if (settings.pool_order == PoolOrder::sum_then_normalize)
    return post_normalize(std::move(pooled), settings);
  return settings.power ? l2_normalize(pooled) : pooled;
}

GlobalVector join_normalized(std::span<const double> first, std::span<const double> second) {
  std::vector<double> joined(first.begin(), first.end());
  joined.insert(joined.end(), second.begin(), second.end());
  return l2_normalize(GlobalVector(std::move(joined)));
}

namespace {

std::vector<Provenance> tdd_modes(TddMode mode) {
  switch (mode) {
    case TddMode::channel: return {Provenance::channel_norm};
    case TddMode::spatial: return {Provenance::spatial_norm};
    case TddMode::both: return {Provenance::channel_norm, Provenance::spatial_norm};
  }
  return {};
}

std::vector<fs::path> require_views(const ManifestEntry& e, Stream s, const std::string& layer) {
  auto paths = e.views_for(s, layer);
  require(!paths.empty(), ErrorKind::validation,
          "image " + e.image_id + " has no " + std::string(to_string(s)) + ":" + layer + " views");
  return paths;
}

std::vector<GlobalVector> read_vectors(const ManifestEntry& e, Stream s, const std::string& layer) {
  std::vector<GlobalVector> out;
  for (const auto& p : require_views(e, s, layer)) out.push_back(read_global_vector(p));
  return out;
}

std::vector<std::size_t> rows_where(const Manifest& m, Split split) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < m.entries.size(); ++i)
    if (m.entries[i].split == split && m.entries[i].label) rows.push_back(i);
  return rows;
}

std::vector<std::size_t> eval_rows(const Manifest& m) {
  auto rows = rows_where(m, Split::test);
  if (rows.empty()) {
    rows = rows_where(m, Split::train);
    log_kv({{"event", "no-labeled-test-images"}, {"eval_set", "train"}});
  }
  require(!rows.empty(), ErrorKind::validation, "manifest has no labeled images to evaluate");
  return rows;
}

RunResult finish(const Manifest& m, ScoreTable scores, std::span<const std::size_t> rows,
                 const PipelineConfig& cfg) {
  std::vector<std::size_t> labels;
  labels.reserve(rows.size());
  for (std::size_t r : rows) labels.push_back(*m.entries[r].label);
  EvalReport report = evaluate(scores.scores, labels, m.class_names, cfg.integration);
  log_kv({{"stage", "evaluate"},
          {"images", std::to_string(report.images)},
          {"mAP", fmt_double(report.map)},
          {"top1", fmt_double(report.top1_accuracy)}});
  return RunResult{std::move(report), std::move(scores)};
}

std::string file_stem_for(const std::string& image_id) {
  std::string s = image_id;
  for (char& c : s)
    if (c == '/' || c == '\\' || c == ':') c = '_';
  return s;
}

/// One feature row per manifest entry, already rounded to float32 exactly as
/// the features files store them.
DenseMatrix global_bank(const Manifest& m, const PipelineConfig& cfg) {
  std::vector<std::vector<double>> rows(m.entries.size());
  parallel_for_index(m.entries.size(), [&](std::size_t i) {
    const auto& e = m.entries[i];
    const GlobalVector o = pool_global(read_vectors(e, Stream::object, cfg.global_layer), cfg.pool_order);
    const GlobalVector s = pool_global(read_vectors(e, Stream::scene, cfg.global_layer), cfg.pool_order);
    rows[i] = as_float32(concat_features(o.values(), s.values(), cfg.feature_weights).values);
  });
  DenseMatrix bank(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i].size() == bank.cols, ErrorKind::shape, "global feature dims differ across images");
    std::copy(rows[i].begin(), rows[i].end(), bank.row(i).begin());
  }
  log_kv({{"stage", "global-features"}, {"images", std::to_string(bank.rows)},
          {"dim", std::to_string(bank.cols)}});
  return bank;
}

DescriptorSet tdd_descriptors(const fs::path& view, Provenance mode, double epsilon) {
  const FeatureMap map = read_feature_map(view);
  const DescriptorSet d = extract_descriptors(tdd_transform(map, mode, epsilon), mode);
  return DescriptorSet(d.dim(), as_float32(d.values()), mode);
}

DescriptorSet rounded(const DescriptorSet& d) {
  return DescriptorSet(d.dim(), as_float32(d.values()), d.provenance());
}

/// Fisher representation of every entry for one stream and one TDD mode.
std::vector<std::vector<double>> local_stream_mode(const Manifest& m, const PipelineConfig& cfg,
                                                   Stream stream, Provenance mode,
                                                   const fs::path& models) {
  const std::string tag = std::string(to_string(stream)) + "_" + std::string(to_string(mode));
  std::vector<std::size_t> train;
  for (std::size_t i = 0; i < m.entries.size(); ++i)
    if (m.entries[i].split == Split::train) train.push_back(i);
  require(!train.empty(), ErrorKind::validation, "manifest has no training images");

  // PCA on training descriptors.
  std::vector<std::vector<DescriptorSet>> train_desc(train.size());
  parallel_for_index(train.size(), [&](std::size_t t) {
    for (const auto& v : require_views(m.entries[train[t]], stream, cfg.local_layer))
      train_desc[t].push_back(tdd_descriptors(v, mode, cfg.tdd_epsilon));
  });
  std::vector<DescriptorSet> flat;
  for (auto& per_image : train_desc)
    for (auto& d : per_image) flat.push_back(std::move(d));
  train_desc.clear();
  const fs::path pca_dir = models / ("pca_" + tag);
  save_pca(fit_pca(concat(flat), cfg.pca_dim), pca_dir);
  const PcaModel pca = load_pca(pca_dir);

  // GMM on projected training descriptors.
  for (auto& d : flat) d = rounded(project(pca, d));
  const fs::path gmm_dir = models / ("gmm_" + tag);
  save_gmm(fit_gmm(concat(flat), cfg.gmm).model, gmm_dir);
  flat.clear();
  const GmmModel gmm = load_gmm(gmm_dir);

  // Encode every image.
  std::vector<std::vector<double>> out(m.entries.size());
  const FvSettings settings = cfg.fv_settings();
  parallel_for_index(m.entries.size(), [&](std::size_t i) {
    std::vector<DescriptorSet> views;
    for (const auto& v : require_views(m.entries[i], stream, cfg.local_layer))
      views.push_back(rounded(project(pca, tdd_descriptors(v, mode, cfg.tdd_epsilon))));
    out[i] = as_float32(encode_image(gmm, views, settings).values());
  });
  log_kv({{"stage", "encode-fv"}, {"stream", std::string(to_string(stream))},
          {"mode", std::string(to_string(mode))}, {"images", std::to_string(out.size())}});
  return out;
}

DenseMatrix local_bank(const Manifest& m, const PipelineConfig& cfg, const fs::path& models) {
  std::vector<std::vector<double>> per_stream[2];
  for (Stream stream : {Stream::object, Stream::scene}) {
    auto& dest = per_stream[stream == Stream::object ? 0 : 1];
    const auto modes = tdd_modes(cfg.tdd_mode);
    std::vector<std::vector<std::vector<double>>> by_mode;
    for (Provenance mode : modes) by_mode.push_back(local_stream_mode(m, cfg, stream, mode, models));
    dest.resize(m.entries.size());
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
      if (by_mode.size() == 1) dest[i] = std::move(by_mode[0][i]);
      else dest[i] = as_float32(join_normalized(by_mode[0][i], by_mode[1][i]).values());
    }
  }
  DenseMatrix bank;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto row =
        as_float32(concat_features(per_stream[0][i], per_stream[1][i], cfg.feature_weights).values);
    if (i == 0) bank = DenseMatrix(m.entries.size(), row.size());
    std::copy(row.begin(), row.end(), bank.row(i).begin());
  }
  return bank;
}

void write_bank(const Manifest& m, const DenseMatrix& bank, const fs::path& dir,
                const fs::path& list_path) {
  std::vector<FeatureListEntry> list;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    const fs::path p = dir / (file_stem_for(e.image_id) + ".fvt");
    const auto row = bank.row(i);
    write_tensor(GlobalVector({row.begin(), row.end()}), p);
    list.push_back({e.image_id, e.label ? static_cast<long>(*e.label) : -1L, e.split,
                    p.lexically_relative(list_path.parent_path())});
  }
  save_feature_list(list, list_path);
}

ScoreTable classify_bank(const Manifest& m, const DenseMatrix& bank, const PipelineConfig& cfg,
                         const fs::path& svm_dir, std::span<const std::size_t> eval) {
  const auto train = rows_where(m, Split::train);
  require(!train.empty(), ErrorKind::validation, "manifest has no labeled training images");
  DenseMatrix x(train.size(), bank.cols);
  std::vector<std::size_t> labels;
  for (std::size_t t = 0; t < train.size(); ++t) {
    std::copy(bank.row(train[t]).begin(), bank.row(train[t]).end(), x.row(t).begin());
    labels.push_back(*m.entries[train[t]].label);
  }
  save_linear_model(train_ovr(x, labels, m.class_names, cfg.svm).model, svm_dir);
  const LinearModel model = load_linear_model(svm_dir);

  ScoreTable table;
  table.scores = DenseMatrix(eval.size(), model.class_count());
  for (std::size_t r = 0; r < eval.size(); ++r) {
    table.image_ids.push_back(m.entries[eval[r]].image_id);
    const ScoreVector s = predict_scores(model, bank.row(eval[r]));
    std::copy(s.scores.begin(), s.scores.end(), table.scores.row(r).begin());
  }
  return table;
}

}  // namespace

RunResult run_scenario1(const Manifest& m, const PipelineConfig& cfg) {
  const auto rows = eval_rows(m);
  ScoreTable table;
  table.scores = DenseMatrix(rows.size(), m.class_count());
  parallel_for_index(rows.size(), [&](std::size_t r) {
    const auto& e = m.entries[rows[r]];
    const GlobalVector o = sum_pool(read_vectors(e, Stream::object, cfg.softmax_layer));
    const GlobalVector s = sum_pool(read_vectors(e, Stream::scene, cfg.softmax_layer));
    require(o.dim() == m.class_count() && s.dim() == m.class_count(), ErrorKind::shape,
            "image " + e.image_id + ": softmax width differs from class count");
    const ScoreVector fused =
        fuse_scores(ScoreVector{{o.values().begin(), o.values().end()}},
                    ScoreVector{{s.values().begin(), s.values().end()}}, cfg.score_weights);
    std::copy(fused.scores.begin(), fused.scores.end(), table.scores.row(r).begin());
  });
  for (std::size_t r : rows) table.image_ids.push_back(m.entries[r].image_id);
  return finish(m, std::move(table), rows, cfg);
}

RunResult run_global(const Manifest& m, const PipelineConfig& cfg, const fs::path& work_dir) {
  const auto eval = eval_rows(m);
  const DenseMatrix bank = global_bank(m, cfg);
  write_bank(m, bank, work_dir / "features", work_dir / "features.tsv");
  return finish(m, classify_bank(m, bank, cfg, work_dir / "models" / "svm", eval), eval, cfg);
}

RunResult run_local_fv(const Manifest& m, const PipelineConfig& cfg, const fs::path& work_dir) {
  const auto eval = eval_rows(m);
  const DenseMatrix bank = local_bank(m, cfg, work_dir / "models");
  write_bank(m, bank, work_dir / "features", work_dir / "features.tsv");
  return finish(m, classify_bank(m, bank, cfg, work_dir / "models" / "svm", eval), eval, cfg);
}

RunResult run_layer_fusion(const Manifest& m, const PipelineConfig& cfg, const fs::path& work_dir) {
  const auto eval = eval_rows(m);
  const DenseMatrix global = global_bank(m, cfg);
  const DenseMatrix local = local_bank(m, cfg, work_dir / "models");
  if (cfg.layer_fusion == LayerFusion::features) {
    const FusionWeights w(cfg.layer_global_weight, cfg.layer_local_weight);
    DenseMatrix bank;
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
      const auto row = as_float32(concat_features(global.row(i), local.row(i), w).values);
      if (i == 0) bank = DenseMatrix(m.entries.size(), row.size());
      std::copy(row.begin(), row.end(), bank.row(i).begin());
    }
    write_bank(m, bank, work_dir / "features", work_dir / "features.tsv");
    return finish(m, classify_bank(m, bank, cfg, work_dir / "models" / "svm", eval), eval, cfg);
  }
  write_bank(m, global, work_dir / "features_global", work_dir / "features_global.tsv");
  write_bank(m, local, work_dir / "features_local", work_dir / "features_local.tsv");
  ScoreTable g = classify_bank(m, global, cfg, work_dir / "models" / "svm", eval);
  const ScoreTable l = classify_bank(m, local, cfg, work_dir / "models" / "svm_local", eval);
  for (std::size_t r = 0; r < g.scores.rows; ++r) {
    const ScoreVector fused =
        fuse_scores(ScoreVector{{g.scores.row(r).begin(), g.scores.row(r).end()}},
                    ScoreVector{{l.scores.row(r).begin(), l.scores.row(r).end()}},
                    FusionWeights(cfg.layer_global_weight, cfg.layer_local_weight));
    std::copy(fused.scores.begin(), fused.scores.end(), g.scores.row(r).begin());
  }
  return finish(m, std::move(g), eval, cfg);
}

RunResult run_pipeline(const Manifest& m, const PipelineConfig& cfg, const fs::path& out_dir) {
  log_kv({{"stage", "run"}, {"scenario", std::string(to_string(cfg.scenario))},
          {"images", std::to_string(m.entries.size())}, {"classes", std::to_string(m.class_count())}});
  RunResult r = [&] {
    switch (cfg.scenario) {
      case Scenario::softmax_fusion: return run_scenario1(m, cfg);
      case Scenario::global_pretrained:
      case Scenario::global_finetuned: return run_global(m, cfg, out_dir);
      case Scenario::local_fv: return run_local_fv(m, cfg, out_dir);
      case Scenario::layer_fusion: return run_layer_fusion(m, cfg, out_dir);
    }
    fail(ErrorKind::validation, "unknown scenario");
  }();
  write_text_atomic(out_dir / "scores.csv", score_table_csv(r.scores));
  write_text_atomic(out_dir / "report.csv", report_csv(r.report));
  write_text_atomic(out_dir / "summary.txt", summary_line(r.report) + "\n");
  return r;
}

std::vector<FeatureListEntry> load_feature_list(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open feature list " + path.string());
  std::vector<FeatureListEntry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string id, label, split, file;
    if (!std::getline(ls, id, '\t') || !std::getline(ls, label, '\t') ||
        !std::getline(ls, split, '\t') || !std::getline(ls, file))
      fail(ErrorKind::validation, path.string() + ":" + std::to_string(line_no) +
                                      ": expected id, label, split, path");
    FeatureListEntry e;
    e.image_id = id;
    try {
      e.label = std::stol(label);
    } catch (const std::logic_error&) {
      fail(ErrorKind::validation, path.string() + ":" + std::to_string(line_no) + ": bad label");
    }
    require(e.label >= -1, ErrorKind::validation, path.string() + ": bad label");
    if (split == "train") e.split = Split::train;
    else if (split == "test") e.split = Split::test;
    else fail(ErrorKind::validation, path.string() + ": split must be train or test");
    e.path = fs::path(file).is_relative() ? path.parent_path() / file : fs::path(file);
    out.push_back(std::move(e));
  }
  return out;
}

void save_feature_list(const std::vector<FeatureListEntry>& entries, const fs::path& path) {
  std::ostringstream out;
  for (const auto& e : entries)
    out << e.image_id << '\t' << e.label << '\t' << (e.split == Split::train ? "train" : "test")
        << '\t' << e.path.generic_string() << '\n';
  write_text_atomic(path, out.str());
}

}  // namespace fvforge
