#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "swarmtax/discovery.hpp"
#include "swarmtax/embed_net.hpp"
#include "swarmtax/eval.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path work_dir() {
    static const fs::path d = [] {
        auto p = fs::temp_directory_path() / "swarmtax_cli";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return d;
}

int run(const std::string& args) {
    const std::string cmd = std::string(SWARMTAX_CLI) + " " + args + " >>" + (work_dir() / "log.txt").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json read_json(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

fs::path write_config(const std::string& name, const json& j) {
    const auto p = work_dir() / name;
    std::ofstream(p) << j.dump();
    return p;
}

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
    EXPECT_EQ(run("--help"), 0);
    EXPECT_EQ(run(""), 1);
    EXPECT_EQ(run("simulate"), 1);  // --controller missing
    EXPECT_EQ(run("frobnicate"), 1);
    EXPECT_EQ(run("--config /nonexistent.json filter --limit 1"), 1);
}

TEST(Cli, SimulateWritesOutputs) {
    const auto out = work_dir() / "sim";
    EXPECT_EQ(run("--seed 3 --out " + out.string() + " simulate --controller 0.6,1.0,0.4,0.5 --horizon 200 --csv"), 0);
    EXPECT_TRUE(fs::exists(out / "trajectory.csv"));
    EXPECT_TRUE(fs::exists(out / "image.pgm"));
    const auto m = read_json(out / "metrics.json");
    EXPECT_EQ(m["hand"].size(), 5u);
    EXPECT_EQ(run("--out " + out.string() + " simulate --controller 0.6,abc,0.4,0.5"), 1);
    EXPECT_EQ(run("--out " + out.string() + " simulate --controller 0.6,1.0,0.4"), 1);
}

TEST(Cli, FilterPrefix) {
    const auto out = work_dir() / "filter";
    EXPECT_EQ(run("--out " + out.string() + " filter --limit 50"), 0);
    std::ifstream in(out / "filter.csv");
    std::size_t lines = 0;
    for (std::string l; std::getline(in, l);) {
        ++lines;
    }
    EXPECT_EQ(lines, 51u);
    EXPECT_EQ(run("--out " + out.string() + " filter --capability two --summary-only"), 1);
    EXPECT_EQ(run("--out " + out.string() + " filter --capability three"), 1);
}

TEST(Cli, DatasetEvolveAndEvaluate) {
    const auto cfg = write_config("small.json", {{"dataset", {{"horizon", 200}}},
                                                 {"evolution", {{"population", 6}, {"generations", 3}, {"horizon", 200}}},
                                                 {"train", {{"batch_size", 16}, {"triplets_per_epoch", 32}, {"max_epochs", 2}}}});
    const auto data = work_dir() / "data";
    EXPECT_EQ(run("--config " + cfg.string() + " --seed 5 --out " + data.string() + " dataset --count 6"), 0);
    const auto manifest = swarmtax::read_manifest(data / "manifest.jsonl", true);
    EXPECT_EQ(manifest.records.size(), 6u);

    const auto model = work_dir() / "model";
    EXPECT_EQ(run("--config " + cfg.string() + " --out " + model.string() + " pretrain --dataset " +
                  (data / "manifest.jsonl").string()),
              0);
    EXPECT_NO_THROW(swarmtax::load_checkpoint(model / "model.swemb"));
    EXPECT_TRUE(fs::exists(model / "loss.csv"));

    const auto emb = work_dir() / "emb";
    EXPECT_EQ(run("--out " + emb.string() + " embed --dataset " + (data / "manifest.jsonl").string()), 0);
    EXPECT_EQ(run("--mapping net:" + (model / "model.swemb").string() + " --out " + emb.string() +
                  " embed --dataset " + (data / "manifest.jsonl").string()),
              0);
    EXPECT_TRUE(fs::exists(emb / "embeddings.csv"));

    const auto evo = work_dir() / "evo";
    EXPECT_EQ(run("--config " + cfg.string() + " --seed 2 --out " + evo.string() + " evolve"), 0);
    const auto archive = swarmtax::Archive::load(evo / "archive.jsonl");
    EXPECT_EQ(archive.size(), 18u);

    EXPECT_EQ(run("--out " + evo.string() + " taxonomy --archive " + (evo / "archive.jsonl").string() + " --k 4"), 0);
    const auto tax = read_json(evo / "taxonomy.json");
    EXPECT_EQ(tax["k"], 4);
    EXPECT_EQ(std::distance(fs::directory_iterator(evo / "gallery"), fs::directory_iterator{}), 4);

    EXPECT_EQ(run("--out " + evo.string() + " eval-distinct --archive " + (evo / "archive.jsonl").string() +
                  " --k 4 --last 2"),
              0);
    const auto dist = read_json(evo / "distinct.json");
    EXPECT_EQ(dist["per_generation"].size(), 2u);
    EXPECT_EQ(run("--out " + evo.string() + " eval-distinct --archive " + (evo / "archive.jsonl").string() +
                  " --no-classifier"),
              1);

    const auto acc = work_dir() / "acc";
    EXPECT_EQ(run("--mapping net:" + (model / "model.swemb").string() + " --out " + acc.string() +
                  " eval-accuracy --synthetic 12 --random-baseline 2"),
              0);
    const auto report = read_json(acc / "accuracy.json");
    EXPECT_EQ(report["admissible"], 4u * 3u * 8u * 3u);
    EXPECT_EQ(report["random_init_trials"].size(), 2u);
    EXPECT_EQ(run("--out " + acc.string() + " eval-accuracy --synthetic 12"), 1);  // hand mapping has no images
    // unlabeled manifest
    EXPECT_EQ(run("--out " + acc.string() + " eval-accuracy --dataset " + (data / "manifest.jsonl").string()), 1);
}

TEST(Cli, IoFailuresExitTwo) {
    const auto out = work_dir() / "io";
    EXPECT_EQ(run("--out " + out.string() + " embed --dataset /nonexistent/manifest.jsonl"), 2);
    EXPECT_EQ(run("--out " + out.string() + " taxonomy --archive /nonexistent/archive.jsonl"), 2);
    EXPECT_EQ(run("--mapping net:/nonexistent.swemb --out " + out.string() + " eval-accuracy --synthetic 6"), 2);
    std::ofstream(work_dir() / "blocker") << "x";
    EXPECT_EQ(run("--out " + (work_dir() / "blocker" / "sub").string() + " filter --limit 1"), 2);
}
