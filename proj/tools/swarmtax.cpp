// swarmtax: command-line front end for the behavior discovery workbench.

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "swarmtax/behavior.hpp"
#include "swarmtax/controller.hpp"
#include "swarmtax/discovery.hpp"
#include "swarmtax/embed_net.hpp"
#include "swarmtax/errors.hpp"
#include "swarmtax/eval.hpp"
#include "swarmtax/hil.hpp"
#include "swarmtax/render.hpp"
#include "swarmtax/sim.hpp"
#include "swarmtax/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace swarmtax;

namespace {

struct Globals {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out = ".";
    std::string mapping = "hand";
    json config = json::object();

    json section(const std::string& name) const {
        return config.contains(name) ? config.at(name) : json::object();
    }
    fs::path out_dir() const {
        std::error_code ec;
        fs::create_directories(out, ec);
        if (ec) {
            throw IoError("cannot create output directory " + out + ": " + ec.message());
        }
        return out;
    }
};

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void write_json_file(const fs::path& path, const json& j) {
    std::ofstream out(path);
    out << j.dump(2) << '\n';
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << std::setprecision(17);
    return out;
}

Controller parse_controller(const std::string& text) {
    std::vector<double> genome;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            genome.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ContractError("controller entry '" + item + "' is not a number");
        }
    }
    return Controller::from_genome(genome);
}

std::string genome_string(const Controller& c) {
    std::ostringstream os;
    os << std::setprecision(17);
    const auto g = c.genome();
    for (std::size_t i = 0; i < g.size(); ++i) {
        os << (i ? " " : "") << g[i];
    }
    return os.str();
}

EvolutionConfig evolution_config(const Globals& g) {
    auto cfg = EvolutionConfig::from_json(g.section("evolution"));
    if (g.seed_given) {
        cfg.seed = g.seed;
    }
    return cfg;
}

TrainConfig train_config(const Globals& g) {
    return TrainConfig::from_json(g.section("train"));
}

// Trajectories for manifest records, replayed from their seeds.
Trajectory replay(const ManifestRecord& r, const Environment& env, std::size_t horizon) {
    return rollout(r.controller, CapabilityModel::for_kind(r.kind), env, r.seed, horizon);
}

// --------------------------------------------------------------------------

int cmd_simulate(const Globals& g, const std::string& controller, std::size_t horizon, bool csv) {
    const auto c = parse_controller(controller);
    const auto traj = rollout(c, CapabilityModel::for_kind(c.kind()), Environment{}, g.seed, horizon);
    const auto dir = g.out_dir();
    if (csv) {
        auto out = open_out(dir / "trajectory.csv");
        write_trajectory_csv(out, traj);
    }
    if (traj.frames.size() >= kRenderWindow + 1) {
        write_pgm(dir / "image.pgm", render(traj));
        const auto b = hand_crafted_embed(traj);
        write_json_file(dir / "metrics.json", {{"controller", c.genome()}, {"seed", g.seed}, {"hand", b.values}});
        std::cout << "hand metrics:";
        for (double v : b.values) {
            std::cout << ' ' << v;
        }
        std::cout << '\n';
    }
    std::cout << "wrote " << traj.frames.size() << " frames to " << dir.string() << '\n';
    return 0;
}

int cmd_filter(const Globals& g, const std::string& capability, bool non_strict, std::uint64_t limit, bool summary) {
    FilterConfig fc;
    fc.boundary = non_strict ? Boundary::non_strict : Boundary::strict;
    const DiscretizedSpace space(capability_from_string(capability));
    const std::uint64_t n = limit ? std::min(limit, space.size()) : space.size();
    if (!limit && space.kind() == CapabilityKind::two_sensor) {
        throw ContractError("the two-sensor space has " + std::to_string(space.size()) +
                            " controllers; pass --limit to enumerate a prefix");
    }
    std::optional<std::ofstream> csv;
    if (!summary) {
        csv = open_out(g.out_dir() / "filter.csv");
        *csv << "controller,m1,m2,m3,m4,m5,score,passes\n";
    }
    std::uint64_t filtered = 0;
    for (std::uint64_t i = 0; i < n; ++i) {
        const auto c = space.at(i);
        const auto r = heuristic_score(c, fc);
        filtered += r.passes ? 0 : 1;
        if (csv) {
            *csv << genome_string(c);
            for (double m : r.metrics) {
                *csv << ',' << m;
            }
            *csv << ',' << r.score << ',' << (r.passes ? 1 : 0) << '\n';
        }
    }
    std::cout << "total=" << n << " passed=" << n - filtered << " filtered=" << filtered << " boundary="
              << (non_strict ? "non_strict" : "strict") << " space_size=" << space.size() << '\n';
    return 0;
}

int cmd_dataset(const Globals& g, std::optional<std::size_t> count, bool no_filter) {
    auto cfg = DatasetConfig::from_json(g.section("dataset"));
    if (count) {
        cfg.count = *count;
    }
    if (no_filter) {
        cfg.filter = false;
    }
    if (g.seed_given) {
        cfg.seed = g.seed;
    }
    const auto dir = g.out_dir();
    const auto m = build_dataset(cfg, dir);
    write_json_file(dir / "dataset_config.json", cfg.to_json());
    std::cout << "wrote " << m.records.size() << " records to " << (dir / "manifest.jsonl").string() << '\n';
    return 0;
}

std::vector<TrajectoryImage> images_for(const fs::path& manifest_path, DatasetManifest* manifest_out = nullptr) {
    auto m = read_manifest(manifest_path, true);
    auto images = load_images(m, manifest_path.parent_path());
    if (manifest_out) {
        *manifest_out = std::move(m);
    }
    return images;
}

void write_loss_log(const fs::path& path, const TrainResult& r) {
    auto out = open_out(path);
    out << "epoch,loss,lr\n";
    for (std::size_t e = 0; e < r.loss_log.size(); ++e) {
        out << e << ',' << r.loss_log[e] << ',' << r.lr_log[e] << '\n';
    }
}

int cmd_pretrain(const Globals& g, const std::string& dataset, std::size_t synthetic) {
    const auto cfg = train_config(g);
    std::vector<TrajectoryImage> images;
    if (synthetic > 0) {
        for (auto& li : synthetic_shapes(synthetic, g.seed)) {
            images.push_back(std::move(li.image));
        }
    } else {
        if (dataset.empty()) {
            throw ContractError("pretrain needs --dataset <manifest> or --synthetic <count>");
        }
        images = images_for(dataset);
    }
    const auto t0 = std::chrono::steady_clock::now();
    auto result = pretrain(images, NetworkSpec::default_architecture(), cfg, g.seed);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto dir = g.out_dir();
    save_checkpoint(dir / "model.swemb", result.net, {{"train", cfg.to_json()}, {"seed", g.seed}});
    write_loss_log(dir / "loss.csv", result);
    std::cout << "epochs=" << result.loss_log.size() << " final_loss=" << result.loss_log.back()
              << " stop=" << result.stop_reason << " seconds=" << secs << '\n';
    return 0;
}

int cmd_serve(const Globals& g, const std::string& dataset, const std::string& journal, const std::string& checkpoint,
              const std::string& host, int port, const std::string& token) {
    ServiceConfig sc;
    sc.manifest = dataset;
    sc.journal = journal.empty() ? g.out_dir() / "labels.jsonl" : fs::path(journal);
    if (!checkpoint.empty()) {
        sc.checkpoint = checkpoint;
    }
    sc.finetune_out = g.out_dir() / "finetuned.swemb";
    const auto hil = g.section("hil");
    sc.budget_fraction = hil.value("budget_fraction", sc.budget_fraction);
    sc.seed_classes = hil.value("seed_classes", std::vector<std::string>{});
    sc.token = token.empty() ? hil.value("token", std::string{}) : token;
    sc.finetune.train = train_config(g);
    sc.finetune.holdout_fraction = hil.value("holdout_fraction", sc.finetune.holdout_fraction);
    sc.seed = g.seed;
    HilService service(sc);
    std::cout << "serving /api/v1 on " << host << ':' << port << std::endl;
    service.listen(host, port);
    return 0;
}

int cmd_finetune(const Globals& g, const std::string& dataset, const std::string& checkpoint,
                 const std::string& journal) {
    DatasetManifest m;
    const auto images = images_for(dataset, &m);
    std::vector<std::string> labels(images.size());
    if (!journal.empty()) {
        const LabelStore store(journal);
        const auto active = store.active_labels();
        for (std::size_t i = 0; i < m.records.size(); ++i) {
            if (const auto it = active.find(m.records[i].id); it != active.end()) {
                labels[i] = std::to_string(it->second);
            }
        }
    } else {
        for (std::size_t i = 0; i < m.records.size(); ++i) {
            labels[i] = m.records[i].label.value_or("");
        }
    }
    FinetuneOptions opt;
    opt.train = train_config(g);
    opt.seed = g.seed;
    opt.holdout_fraction = g.section("hil").value("holdout_fraction", opt.holdout_fraction);
    const auto start = load_checkpoint(checkpoint);
    const auto result = finetune(start, images, labels, opt);
    const auto dir = g.out_dir();
    save_checkpoint(dir / "finetuned.swemb", result.net, {{"train", opt.train.to_json()}, {"seed", g.seed}});
    write_json_file(dir / "finetune.json", result.metrics());
    std::cout << result.metrics().dump() << '\n';
    return 0;
}

int cmd_evolve(const Globals& g, std::optional<std::size_t> generations, std::optional<std::size_t> population,
               const std::string& capability, bool no_filter, bool images) {
    auto cfg = evolution_config(g);
    if (generations) {
        cfg.generations = *generations;
    }
    if (population) {
        cfg.population = *population;
    }
    if (!capability.empty()) {
        cfg.kind = capability_from_string(capability);
    }
    if (no_filter) {
        cfg.filter = false;
    }
    const auto dir = g.out_dir();
    if (images) {
        cfg.image_dir = dir / "images";
        fs::create_directories(*cfg.image_dir);
    }
    const auto mapping = make_mapping(g.mapping);
    write_json_file(dir / "evolution_config.json", cfg.to_json());
    const auto archive = run_novelty_search(cfg, *mapping, dir / "archive.jsonl", [](std::size_t gen, const Archive& a) {
        std::cout << "generation " << gen << " archive=" << a.size() << std::endl;
    });
    std::cout << "archive: " << archive.size() << " entries, mapping " << archive.mapping_id() << '\n';
    return 0;
}

EvolutionConfig config_for_archive(const Globals& g, const fs::path& archive_path) {
    const auto beside = archive_path.parent_path() / "evolution_config.json";
    if (g.config.contains("evolution") || !fs::exists(beside)) {
        return evolution_config(g);
    }
    return EvolutionConfig::from_json(read_json_file(beside));
}

int cmd_taxonomy(const Globals& g, const std::string& archive_path, std::size_t k) {
    const auto archive = Archive::load(archive_path);
    const auto behaviors = archive.behaviors();
    const auto tax = k_medoids(behaviors, k);
    const auto cfg = config_for_archive(g, archive_path);
    const auto dir = g.out_dir();
    const auto gallery = dir / "gallery";
    fs::create_directories(gallery);
    json medoids = json::array();
    for (std::size_t m = 0; m < tax.k(); ++m) {
        const auto& e = archive[tax.medoids[m]];
        std::size_t gen = 0;
        std::size_t idx = 0;
        if (std::sscanf(e.image_id.c_str(), "g%zu-i%zu", &gen, &idx) == 2) {
            const auto traj = rollout(e.controller, CapabilityModel::for_kind(e.controller.kind()), cfg.environment,
                                      derive_seed(cfg.seed, gen, idx), cfg.horizon);
            write_pgm(gallery / (e.image_id + ".pgm"), render(traj));
        }
        const auto members = std::count(tax.assignments.begin(), tax.assignments.end(), m);
        medoids.push_back({{"index", tax.medoids[m]}, {"entry", to_json(e)}, {"members", members}});
    }
    write_json_file(dir / "taxonomy.json",
                    {{"k", tax.k()}, {"cost", tax.cost}, {"cost_history", tax.cost_history}, {"medoids", medoids},
                     {"assignments", tax.assignments}, {"mapping_id", archive.mapping_id()}});
    std::cout << "k=" << tax.k() << " cost=" << tax.cost << " swaps=" << tax.cost_history.size() - 1 << '\n';
    return 0;
}

DatasetConfig config_for_dataset(const Globals& g, const fs::path& manifest_path) {
    const auto beside = manifest_path.parent_path() / "dataset_config.json";
    if (g.config.contains("dataset") || !fs::exists(beside)) {
        return DatasetConfig::from_json(g.section("dataset"));
    }
    return DatasetConfig::from_json(read_json_file(beside));
}

int cmd_eval_accuracy(const Globals& g, const std::string& dataset, std::size_t synthetic, std::size_t baseline) {
    std::vector<TrajectoryImage> images;
    std::vector<std::string> labels;
    std::vector<BehaviorVector> vectors;
    std::string mapping_id;
    const bool hand = g.mapping == "hand";
    if (synthetic > 0) {
        if (hand) {
            throw ContractError("synthetic images carry no trajectories; use --mapping net:<checkpoint>");
        }
        for (auto& li : synthetic_shapes(synthetic, g.seed)) {
            images.push_back(std::move(li.image));
            labels.push_back(li.label);
        }
    } else {
        if (dataset.empty()) {
            throw ContractError("eval-accuracy needs --dataset <manifest> or --synthetic <count>");
        }
        DatasetManifest m;
        images = images_for(dataset, &m);
        for (const auto& r : m.records) {
            if (!r.label) {
                throw ContractError("manifest record " + r.id + " has no label");
            }
            labels.push_back(*r.label);
        }
        if (hand) {
            const auto dc = config_for_dataset(g, dataset);
            for (const auto& r : m.records) {
                vectors.push_back(hand_crafted_embed(replay(r, dc.environment, dc.horizon)));
            }
            mapping_id = kHandMappingId;
        }
    }
    if (!hand) {
        if (g.mapping.rfind("net:", 0) != 0) {
            throw ContractError("mapping must be 'hand' or 'net:<checkpoint>'");
        }
        const auto net = load_checkpoint(g.mapping.substr(4));
        vectors = embed_images(net, images);
        mapping_id = g.mapping;
    }
    const auto report = l2_accuracy(vectors, labels, mapping_id);
    json out = report.to_json();
    if (baseline > 0) {
        const auto b = random_init_baseline(NetworkSpec::default_architecture(), images, labels, baseline, g.seed);
        out["random_init_mean"] = b.mean;
        out["random_init_trials"] = b.percentages;
    }
    write_json_file(g.out_dir() / "accuracy.json", out);
    std::cout << out.dump() << '\n';
    return 0;
}

int cmd_eval_distinct(const Globals& g, const std::string& archive_path, std::size_t k, std::size_t last,
                      const std::string& labels_path, const std::string& rules_path, bool no_classifier) {
    const auto archive = Archive::load(archive_path);
    std::function<DistinctReport(const Archive&, const Taxonomy&)> count;
    if (!labels_path.empty()) {
        const auto labels = read_label_file(labels_path);
        count = [labels](const Archive& a, const Taxonomy& t) { return count_distinct(a, t, labels); };
    } else if (no_classifier) {
        throw ContractError("eval-distinct needs --labels when the classifier is off");
    } else {
        const auto classifier = rules_path.empty() ? SignatureClassifier::defaults() : SignatureClassifier::load(rules_path);
        const auto source = hand_signature_source(archive, config_for_archive(g, archive_path));
        count = [classifier, source](const Archive& a, const Taxonomy& t) {
            return count_distinct(a, t, classifier, source);
        };
    }
    const auto series = distinct_over_generations(archive, k, last, count);
    json reports = json::array();
    for (std::size_t i = 0; i < series.reports.size(); ++i) {
        reports.push_back({{"generation", series.generations[i]}, {"report", series.reports[i].to_json()}});
        std::cout << "generation " << series.generations[i] << ": " << series.reports[i].row() << '\n';
    }
    write_json_file(g.out_dir() / "distinct.json", {{"mean_distinct", series.mean_distinct}, {"k", k}, {"per_generation", reports}});
    std::cout << "mean distinct over " << series.reports.size() << " generations: " << series.mean_distinct << '\n';
    return 0;
}

int cmd_embed(const Globals& g, const std::string& dataset) {
    DatasetManifest m;
    const auto images = images_for(dataset, &m);
    std::vector<BehaviorVector> vectors;
    if (g.mapping == "hand") {
        const auto dc = config_for_dataset(g, dataset);
        for (const auto& r : m.records) {
            vectors.push_back(hand_crafted_embed(replay(r, dc.environment, dc.horizon)));
        }
    } else if (g.mapping.rfind("net:", 0) == 0) {
        vectors = embed_images(load_checkpoint(g.mapping.substr(4)), images);
    } else {
        throw ContractError("mapping must be 'hand' or 'net:<checkpoint>'");
    }
    auto out = open_out(g.out_dir() / "embeddings.csv");
    out << "id,controller,b0,b1,b2,b3,b4\n";
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        out << m.records[i].id << ',' << genome_string(m.records[i].controller);
        for (double v : vectors[i].values) {
            out << ',' << v;
        }
        out << '\n';
    }
    std::cout << "wrote " << vectors.size() << " embeddings\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"swarm behavior discovery workbench"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "run seed");
    app.add_option("--out", g.out, "output directory");
    app.add_option("--mapping", g.mapping, "hand | net:<checkpoint>");

    std::function<int()> run;

    auto* sim = app.add_subcommand("simulate", "roll out one controller");
    std::string controller;
    std::size_t horizon = 1200;
    bool csv = false;
    sim->add_option("--controller", controller, "comma-separated genome")->required();
    sim->add_option("--horizon", horizon, "steps");
    sim->add_flag("--csv", csv, "write trajectory.csv");
    sim->callback([&] { run = [&] { return cmd_simulate(g, controller, horizon, csv); }; });

    auto* filter = app.add_subcommand("filter", "score the discretized controller space");
    std::string capability = "single";
    bool non_strict = false;
    bool summary = false;
    std::uint64_t limit = 0;
    filter->add_option("--capability", capability, "single | two");
    filter->add_flag("--non-strict", non_strict, "penalize m == psi as well");
    filter->add_option("--limit", limit, "enumerate only the first N controllers");
    filter->add_flag("--summary-only", summary, "skip filter.csv");
    filter->callback([&] { run = [&] { return cmd_filter(g, capability, non_strict, limit, summary); }; });

    auto* dataset = app.add_subcommand("dataset", "simulate and render a dataset");
    std::optional<std::size_t> count;
    bool no_filter = false;
    dataset->add_option("--count", count, "number of controllers");
    dataset->add_flag("--no-filter", no_filter, "do not reject filtered controllers");
    dataset->callback([&] { run = [&] { return cmd_dataset(g, count, no_filter); }; });

    auto* pre = app.add_subcommand("pretrain", "self-supervised triplet pretraining");
    std::string manifest;
    std::size_t synthetic = 0;
    pre->add_option("--dataset", manifest, "manifest.jsonl");
    pre->add_option("--synthetic", synthetic, "train on N procedural images instead");
    pre->callback([&] { run = [&] { return cmd_pretrain(g, manifest, synthetic); }; });

    auto* serve = app.add_subcommand("serve", "run the labeling service");
    std::string journal;
    std::string checkpoint;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string token;
    serve->add_option("--dataset", manifest, "manifest.jsonl")->required();
    serve->add_option("--journal", journal, "label journal (default <out>/labels.jsonl)");
    serve->add_option("--checkpoint", checkpoint, ".swemb network for query selection");
    serve->add_option("--host", host);
    serve->add_option("--port", port);
    serve->add_option("--token", token, "require this bearer token");
    serve->callback([&] { run = [&] { return cmd_serve(g, manifest, journal, checkpoint, host, port, token); }; });

    auto* ft = app.add_subcommand("finetune", "fine-tune a checkpoint on class labels");
    ft->add_option("--dataset", manifest, "manifest.jsonl (labels used unless --journal)")->required();
    ft->add_option("--checkpoint", checkpoint, ".swemb to start from")->required();
    ft->add_option("--journal", journal, "label journal from the service");
    ft->callback([&] { run = [&] { return cmd_finetune(g, manifest, checkpoint, journal); }; });

    auto* evo = app.add_subcommand("evolve", "novelty search");
    std::optional<std::size_t> generations;
    std::optional<std::size_t> population;
    std::string evo_capability;
    bool images = false;
    evo->add_option("--generations", generations);
    evo->add_option("--population", population);
    evo->add_option("--capability", evo_capability, "single | two");
    evo->add_flag("--no-filter", no_filter);
    evo->add_flag("--images", images, "write every evaluated image");
    evo->callback([&] {
        run = [&] { return cmd_evolve(g, generations, population, evo_capability, no_filter, images); };
    });

    auto* tax = app.add_subcommand("taxonomy", "k-medoids over an archive");
    std::string archive;
    std::size_t k = 12;
    tax->add_option("--archive", archive, "archive.jsonl")->required();
    tax->add_option("--k", k);
    tax->callback([&] { run = [&] { return cmd_taxonomy(g, archive, k); }; });

    auto* acc = app.add_subcommand("eval-accuracy", "L2 triplet accuracy on a labeled set");
    std::size_t baseline = 0;
    acc->add_option("--dataset", manifest, "labeled manifest.jsonl");
    acc->add_option("--synthetic", synthetic, "use N procedural labeled images");
    acc->add_option("--random-baseline", baseline, "also average N randomly initialized networks");
    acc->callback([&] { run = [&] { return cmd_eval_accuracy(g, manifest, synthetic, baseline); }; });

    auto* dist = app.add_subcommand("eval-distinct", "distinct behaviors among k medoids");
    std::size_t last = 10;
    std::string labels;
    std::string rules;
    bool no_classifier = false;
    dist->add_option("--archive", archive, "archive.jsonl")->required();
    dist->add_option("--k", k);
    dist->add_option("--last", last, "average over this many final generations");
    dist->add_option("--labels", labels, "JSON {image_id: class}");
    dist->add_option("--rules", rules, "signature rules JSON");
    dist->add_flag("--no-classifier", no_classifier);
    dist->callback([&] {
        run = [&] { return cmd_eval_distinct(g, archive, k, last, labels, rules, no_classifier); };
    });

    auto* emb = app.add_subcommand("embed", "behavior vectors for a dataset");
    emb->add_option("--dataset", manifest, "manifest.jsonl")->required();
    emb->callback([&] { run = [&] { return cmd_embed(g, manifest); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        g.seed_given = app.count("--seed") > 0;
        if (!g.config_path.empty()) {
            g.config = read_json_file(g.config_path);
        }
        return run();
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
