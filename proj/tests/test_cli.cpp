#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "fvforge/log.hpp"
#include "fvforge/pipeline.hpp"
#include "fvforge/synth.hpp"
#include "support.hpp"

using namespace fvforge;
using testing_support::slurp;
using testing_support::TempDir;
using testing_support::tree_bytes;
namespace fs = std::filesystem;

namespace {

struct Cli {
  int code = -1;
  std::string out, err;
};

Cli fvforge_cmd(const std::string& args) {
  static int counter = 0;
  const fs::path base = fs::temp_directory_path() / ("fvforge-cli-" + std::to_string(::getpid()) + "-" +
                                                     std::to_string(counter++));
  const std::string cmd = std::string("'") + FVFORGE_BIN + "' " + args + " > '" + base.string() +
                          ".out' 2> '" + base.string() + ".err'";
  const int status = std::system(cmd.c_str());
  Cli r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(base.string() + ".out");
  r.err = slurp(base.string() + ".err");
  fs::remove(base.string() + ".out");
  fs::remove(base.string() + ".err");
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

void must(const std::string& args) {
  const Cli r = fvforge_cmd(args);
  ASSERT_EQ(r.code, 0) << args << "\n" << r.err;
}

SynthOptions tiny() {
  SynthOptions o;
  o.classes = 3;
  o.train_per_class = 3;
  o.test_per_class = 2;
  o.map_size = 3;
  o.channels = 6;
  o.fc_dim = 8;
  return o;
}

}  // namespace

TEST(CliExit, HelpIsZeroWithUsageOnStdout) {
  const Cli r = fvforge_cmd("--help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("Usage"), std::string::npos);
  EXPECT_NE(r.out.find("fit-gmm"), std::string::npos);
  EXPECT_EQ(fvforge_cmd("encode-fv --help").code, 0);
}

TEST(CliExit, UnknownSubcommandIsUsageError) {
  const Cli r = fvforge_cmd("nonsense");
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(r.err.empty());
  EXPECT_EQ(fvforge_cmd("").code, 2);
  EXPECT_EQ(fvforge_cmd("fit-pca --dim 3").code, 2);
}

TEST(CliExit, MissingScoresIsDataError) {
  EXPECT_EQ(fvforge_cmd("evaluate --scores /nonexistent/missing.csv").code, 3);
}

TEST(CliExit, BadParameterAndCorruptInput) {
  TempDir dir("cx");
  must("synth --classes 2 --images-per-class 2 --test-per-class 1 --map-size 3 --channels 4 --out " + q(dir / "d"));
  const fs::path map = dir / "d" / "tensors" / "img_00000_object_v0_conv5_3.fvt";
  ASSERT_TRUE(fs::exists(map));
  EXPECT_EQ(fvforge_cmd("tdd --mode channel --epsilon -1 --in " + q(map) + " --out " + q(dir / "x.fvt")).code, 2);
  std::ofstream(dir / "bad.fvt") << "FVT1garbage";
  EXPECT_EQ(fvforge_cmd("tdd --mode channel --in " + q(dir / "bad.fvt") + " --out " + q(dir / "x.fvt")).code, 3);
  EXPECT_FALSE(fs::exists(dir / "x.fvt"));
}

TEST(CliAtomicity, FailedFitLeavesNoOutput) {
  TempDir dir("ca");
  must("synth --classes 2 --images-per-class 1 --test-per-class 0 --views 1 --map-size 2 --channels 4 --out " +
       q(dir / "d"));
  const fs::path map = dir / "d" / "tensors" / "img_00000_object_v0_conv5_3.fvt";
  must("tdd --mode channel --in " + q(map) + " --out " + q(dir / "desc.fvt"));
  // 4 descriptors cannot support 9 components.
  EXPECT_NE(fvforge_cmd("fit-gmm --k 9 --in " + q(dir / "desc.fvt") + " --out " + q(dir / "gmm")).code, 0);
  EXPECT_FALSE(fs::exists(dir / "gmm"));
  for (const auto& e : fs::directory_iterator(dir.path()))
    EXPECT_EQ(e.path().filename().string().find(".tmp"), std::string::npos) << e.path();
}

TEST(CliPlanViews, ThirtyViewsForSquareImage) {
  const Cli r = fvforge_cmd("plan-views --width 512 --height 512");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 31);
}

TEST(CliRun, MatchesLibraryRunAndIgnoresThreadCount) {
  TempDir dir("cr");
  set_logging(false);
  const Manifest m = synthesize(tiny(), dir / "data");
  std::ofstream(dir / "run.cfg") << "[pipeline]\nscenario = layer_fusion\n[pca]\ndim = 4\n[gmm]\nk = 2\n";
  run_pipeline(m, load_config(dir / "run.cfg"), dir / "lib");
  set_logging(true);
  must("--threads 1 run --config " + q(dir / "run.cfg") + " --manifest " + q(dir / "data" / "data.manifest") +
       " --out " + q(dir / "one"));
  must("--threads 3 run --config " + q(dir / "run.cfg") + " --manifest " + q(dir / "data" / "data.manifest") +
       " --out " + q(dir / "three"));
  const auto lib = tree_bytes(dir / "lib");
  EXPECT_EQ(tree_bytes(dir / "one"), lib);
  EXPECT_EQ(tree_bytes(dir / "three"), lib);
}

/// The local_fv scenario scripted from the single-stage subcommands must
/// reproduce the in-process run byte for byte.
TEST(CliComposition, LocalFisherVectorsMatchPipeline) {
  TempDir dir("cc");
  must("synth --classes 3 --images-per-class 3 --test-per-class 2 --map-size 3 --channels 6 --fc-dim 8 --out " +
       q(dir / "data"));
  const fs::path manifest_path = dir / "data" / "data.manifest";
  const Manifest m = load_manifest(manifest_path);
  std::ofstream(dir / "run.cfg") << "[pipeline]\nscenario = local_fv\n[pca]\ndim = 4\n[gmm]\nk = 2\n";
  must("run --config " + q(dir / "run.cfg") + " --manifest " + q(manifest_path) + " --out " + q(dir / "ref"));

  const fs::path w = dir / "cli";
  fs::create_directories(w / "desc");
  fs::create_directories(w / "fv");
  fs::create_directories(w / "features");
  std::map<std::string, std::vector<std::string>> stream_fv;  // per stream: joined fv per entry
  for (Stream s : {Stream::object, Stream::scene}) {
    const std::string sn(to_string(s));
    // descriptors per view, both TDD modes
    std::vector<std::vector<std::pair<fs::path, fs::path>>> desc(m.entries.size());
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
      std::size_t j = 0;
      for (const auto& v : m.entries[i].views_for(s, "conv5_3")) {
        const std::string stem = sn + "_" + std::to_string(i) + "_" + std::to_string(j++);
        const fs::path ch = w / "desc" / (stem + "_channel.fvt"), sp = w / "desc" / (stem + "_spatial.fvt");
        must("tdd --mode both --in " + q(v) + " --out " + q(ch) + " --out-spatial " + q(sp));
        desc[i].emplace_back(ch, sp);
      }
    }
    std::vector<std::vector<fs::path>> fv_by_mode(2);
    for (int mode = 0; mode < 2; ++mode) {
      const std::string tag = sn + "_" + (mode == 0 ? "channel" : "spatial");
      const fs::path list = w / ("train_" + tag + ".list");
      {
        std::ofstream out(list);
        for (std::size_t i = 0; i < m.entries.size(); ++i)
          if (m.entries[i].split == Split::train)
            for (const auto& d : desc[i]) out << (mode == 0 ? d.first : d.second).string() << "\n";
      }
      must("fit-pca --dim 4 --in-list " + q(list) + " --out " + q(w / "models" / ("pca_" + tag)));
      std::vector<std::vector<fs::path>> projected(m.entries.size());
      for (std::size_t i = 0; i < m.entries.size(); ++i)
        for (const auto& d : desc[i]) {
          const fs::path src = mode == 0 ? d.first : d.second;
          const fs::path dst = src.parent_path() / (src.stem().string() + "_pca.fvt");
          must("apply-pca --model " + q(w / "models" / ("pca_" + tag)) + " --in " + q(src) + " --out " + q(dst));
          projected[i].push_back(dst);
        }
      const fs::path plist = w / ("train_" + tag + "_pca.list");
      {
        std::ofstream out(plist);
        for (std::size_t i = 0; i < m.entries.size(); ++i)
          if (m.entries[i].split == Split::train)
            for (const auto& p : projected[i]) out << p.string() << "\n";
      }
      must("fit-gmm --k 2 --in-list " + q(plist) + " --out " + q(w / "models" / ("gmm_" + tag)));
      for (std::size_t i = 0; i < m.entries.size(); ++i) {
        std::string ins;
        for (const auto& p : projected[i]) ins += " --in " + q(p);
        const fs::path out = w / "fv" / (tag + "_" + std::to_string(i) + ".fvt");
        must("encode-fv --gmm " + q(w / "models" / ("gmm_" + tag)) + ins + " --out " + q(out));
        fv_by_mode[mode].push_back(out);
      }
    }
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
      const fs::path out = w / "fv" / (sn + "_" + std::to_string(i) + ".fvt");
      must("fuse --mode features --first " + q(fv_by_mode[0][i]) + " --second " + q(fv_by_mode[1][i]) +
           " --l2 --out " + q(out));
      stream_fv[sn].push_back(out.string());
    }
  }
  {
    std::ofstream list(w / "features.tsv");
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
      const auto& e = m.entries[i];
      const fs::path out = w / "features" / (e.image_id + ".fvt");
      must("fuse --mode features --object " + q(stream_fv["object"][i]) + " --scene " + q(stream_fv["scene"][i]) +
           " --out " + q(out));
      list << e.image_id << '\t' << *e.label << '\t' << (e.split == Split::train ? "train" : "test")
           << "\tfeatures/" << e.image_id << ".fvt\n";
    }
  }
  must("train-svm --features " + q(w / "features.tsv") + " --manifest " + q(manifest_path) + " --out " +
       q(w / "models" / "svm"));
  must("predict --model " + q(w / "models" / "svm") + " --in " + q(w / "features.tsv") + " --split test --out " +
       q(w / "scores.csv"));
  const Cli ev = fvforge_cmd("evaluate --scores " + q(w / "scores.csv") + " --manifest " + q(manifest_path) +
                             " --out " + q(w / "report.csv"));
  ASSERT_EQ(ev.code, 0) << ev.err;

  const auto ref = tree_bytes(dir / "ref");
  const auto got = tree_bytes(w);
  std::size_t compared = 0;
  for (const auto& [rel, bytes] : ref) {
    if (rel == "summary.txt") continue;
    ASSERT_TRUE(got.count(rel)) << rel;
    EXPECT_EQ(got.at(rel), bytes) << rel;
    ++compared;
  }
  EXPECT_EQ(compared, ref.size() - 1);
  EXPECT_GE(compared, 8u + 1u + 15u + 3u);
  EXPECT_EQ(ev.out, slurp(dir / "ref" / "summary.txt"));
}
