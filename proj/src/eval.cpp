#include "swarmtax/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "swarmtax/errors.hpp"

namespace swarmtax {

// ---------------------------------------------------------------------------
// Accuracy.

nlohmann::json AccuracyReport::to_json() const {
    return {{"mapping_id", mapping_id}, {"admissible", admissible}, {"correct", correct}, {"percentage", percentage}};
}

namespace {

std::vector<int> class_indices(std::span<const std::string> labels, std::size_t* classes = nullptr) {
    std::unordered_map<std::string, int> ids;
    std::vector<int> out;
    out.reserve(labels.size());
    for (const auto& l : labels) {
        auto [it, inserted] = ids.emplace(l, static_cast<int>(ids.size()));
        out.push_back(it->second);
    }
    if (classes) {
        *classes = ids.size();
    }
    return out;
}

}  // namespace

std::uint64_t admissible_triplet_count(std::span<const std::string> labels) {
    std::size_t classes = 0;
    const auto idx = class_indices(labels, &classes);
    std::vector<std::uint64_t> sizes(classes, 0);
    for (int c : idx) {
        ++sizes[static_cast<std::size_t>(c)];
    }
    const std::uint64_t m = labels.size();
    std::uint64_t total = 0;
    for (auto s : sizes) {
        total += s * (s - 1) * (m - s);
    }
    return total;
}

AccuracyReport l2_accuracy(std::span<const BehaviorVector> embeddings, std::span<const std::string> labels,
                           std::string mapping_id) {
    if (embeddings.size() != labels.size()) {
        throw ContractError("l2_accuracy: embeddings and labels differ in length");
    }
    const auto cls = class_indices(labels);
    const std::size_t m = embeddings.size();
    AccuracyReport report;
    report.mapping_id = std::move(mapping_id);
    report.admissible = admissible_triplet_count(labels);
    if (report.admissible == 0) {
        throw ContractError("l2_accuracy: no admissible triplets (need two classes and a class with two members)");
    }

    std::vector<double> negatives;
    for (std::size_t a = 0; a < m; ++a) {
        negatives.clear();
        for (std::size_t n = 0; n < m; ++n) {
            if (cls[n] != cls[a]) {
                negatives.push_back(euclidean(embeddings[a], embeddings[n]));
            }
        }
        std::sort(negatives.begin(), negatives.end());
        for (std::size_t p = 0; p < m; ++p) {
            if (p == a || cls[p] != cls[a]) {
                continue;
            }
            const double dp = euclidean(embeddings[a], embeddings[p]);
            // negatives strictly farther than the positive
            const auto farther = negatives.end() - std::upper_bound(negatives.begin(), negatives.end(), dp);
            report.correct += static_cast<std::uint64_t>(farther);
        }
    }
    report.percentage = 100.0 * static_cast<double>(report.correct) / static_cast<double>(report.admissible);
    return report;
}

std::vector<BehaviorVector> embed_images(const EmbeddingNet<float>& net, std::span<const TrajectoryImage> images,
                                         std::size_t batch) {
    if (batch == 0) {
        throw ContractError("embed_images: batch must be >= 1");
    }
    std::vector<BehaviorVector> out;
    out.reserve(images.size());
    std::vector<const TrajectoryImage*> ptrs;
    for (std::size_t start = 0; start < images.size(); start += batch) {
        const std::size_t end = std::min(images.size(), start + batch);
        ptrs.clear();
        for (std::size_t i = start; i < end; ++i) {
            ptrs.push_back(&images[i]);
        }
        const auto y = net.forward(net.pack(ptrs));
        if (y.rows() != static_cast<Eigen::Index>(kBehaviorDims)) {
            throw ContractError("embed_images: network output is not 5-dimensional");
        }
        for (Eigen::Index c = 0; c < y.cols(); ++c) {
            BehaviorVector b;
            b.mapping_id = "net";
            for (std::size_t d = 0; d < kBehaviorDims; ++d) {
                b.values[d] = static_cast<double>(y(static_cast<Eigen::Index>(d), c));
            }
            out.push_back(std::move(b));
        }
    }
    return out;
}

BaselineReport random_init_baseline(const NetworkSpec& spec, std::span<const TrajectoryImage> images,
                                    std::span<const std::string> labels, std::size_t trials, std::uint64_t seed) {
    if (trials == 0) {
        throw ContractError("random_init_baseline: trials must be >= 1");
    }
    BaselineReport report;
    for (std::size_t t = 0; t < trials; ++t) {
        const auto net = EmbeddingNet<float>::initialized(spec, derive_seed(seed, t));
        report.percentages.push_back(l2_accuracy(embed_images(net, images), labels, "random-init").percentage);
    }
    report.mean = std::accumulate(report.percentages.begin(), report.percentages.end(), 0.0) /
                  static_cast<double>(trials);
    return report;
}

// ---------------------------------------------------------------------------
// Manifests.

nlohmann::json to_json(const ManifestRecord& r) {
    nlohmann::json j = {
        {"id", r.id},
        {"controller", r.controller.genome()},
        {"capability", to_string(r.kind)},
        {"seed", r.seed},
        {"image", r.image_path},
    };
    if (r.label) {
        j["label"] = *r.label;
    }
    return j;
}

ManifestRecord manifest_record_from_json(const nlohmann::json& j) {
    ManifestRecord r;
    r.id = j.at("id").get<std::string>();
    r.controller = Controller::from_genome(j.at("controller").get<std::vector<double>>());
    r.kind = capability_from_string(j.at("capability").get<std::string>());
    if (r.kind != r.controller.kind()) {
        throw ContractError("manifest record " + r.id + ": controller does not match capability");
    }
    r.seed = j.at("seed").get<std::uint64_t>();
    r.image_path = j.at("image").get<std::string>();
    if (j.contains("label") && !j.at("label").is_null()) {
        r.label = j.at("label").get<std::string>();
    }
    return r;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot open manifest " + path.string());
    }
    for (const auto& r : manifest.records) {
        out << to_json(r).dump() << '\n';
    }
    if (!out) {
        throw IoError("manifest write failed: " + path.string());
    }
}

DatasetManifest read_manifest(const std::filesystem::path& path, bool check_images) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open manifest " + path.string());
    }
    DatasetManifest m;
    std::set<std::string> ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        ManifestRecord r;
        try {
            r = manifest_record_from_json(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw IoError("manifest line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!ids.insert(r.id).second) {
            throw ContractError("manifest: duplicate id " + r.id);
        }
        if (check_images && !std::filesystem::exists(path.parent_path() / r.image_path)) {
            throw IoError("manifest: missing image " + r.image_path);
        }
        m.records.push_back(std::move(r));
    }
    return m;
}

std::vector<TrajectoryImage> load_images(const DatasetManifest& manifest, const std::filesystem::path& base_dir) {
    std::vector<TrajectoryImage> images;
    images.reserve(manifest.records.size());
    for (const auto& r : manifest.records) {
        auto img = read_pgm(base_dir / r.image_path);
        img.source_id = r.id;
        images.push_back(std::move(img));
    }
    return images;
}

void DatasetConfig::validate() const {
    if (count == 0) {
        throw ContractError("dataset: count must be >= 1");
    }
    if (horizon < kRenderWindow) {
        throw ContractError("dataset: horizon shorter than the render window");
    }
}

nlohmann::json DatasetConfig::to_json() const {
    return {
        {"count", count},     {"capability", swarmtax::to_string(kind)}, {"seed", seed},
        {"filter", filter},   {"agents", environment.agent_count},       {"width", environment.width},
        {"height", environment.height}, {"horizon", horizon},
    };
}

DatasetConfig DatasetConfig::from_json(const nlohmann::json& j) {
    DatasetConfig c;
    c.count = j.value("count", c.count);
    if (j.contains("capability")) {
        c.kind = capability_from_string(j.at("capability").get<std::string>());
    }
    c.seed = j.value("seed", c.seed);
    c.filter = j.value("filter", c.filter);
    c.environment.agent_count = j.value("agents", c.environment.agent_count);
    c.environment.width = j.value("width", c.environment.width);
    c.environment.height = j.value("height", c.environment.height);
    c.horizon = j.value("horizon", c.horizon);
    c.validate();
    return c;
}

std::vector<Controller> sample_dataset_controllers(const DatasetConfig& cfg) {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, 0xda7a));
    std::vector<Controller> out;
    out.reserve(cfg.count);
    while (out.size() < cfg.count) {
        auto c = sample_discretized(cfg.kind, rng);
        if (!cfg.filter || passes_filter(c, cfg.filter_config)) {
            out.push_back(std::move(c));
        }
    }
    return out;
}

DatasetManifest build_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir) {
    const auto controllers = sample_dataset_controllers(cfg);
    const auto model = CapabilityModel::for_kind(cfg.kind);
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "images", ec);
    if (ec) {
        throw IoError("cannot create " + (out_dir / "images").string() + ": " + ec.message());
    }
    DatasetManifest manifest;
    const int width = static_cast<int>(std::to_string(cfg.count).size());
    for (std::size_t i = 0; i < controllers.size(); ++i) {
        std::string num = std::to_string(i);
        ManifestRecord r;
        r.id = "d" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(num.size()))), '0') + num;
        r.controller = controllers[i];
        r.kind = cfg.kind;
        r.seed = derive_seed(cfg.seed, 1, i);
        r.image_path = "images/" + r.id + ".pgm";
        const auto traj = rollout(r.controller, model, cfg.environment, r.seed, cfg.horizon);
        try {
            write_pgm(out_dir / r.image_path, render(traj));
        } catch (const IoError& e) {
            throw IoError("dataset record " + r.id + ": " + e.what());
        }
        manifest.records.push_back(std::move(r));
    }
    write_manifest(out_dir / "manifest.jsonl", manifest);
    return manifest;
}

// ---------------------------------------------------------------------------
// Signature classifier.

namespace {

const std::array<std::string, kBehaviorDims> kMetricNames = {"average_speed", "angular_momentum", "radial_variance",
                                                             "scatter", "group_rotation"};

std::size_t metric_index(const std::string& name) {
    for (std::size_t i = 0; i < kMetricNames.size(); ++i) {
        if (kMetricNames[i] == name) {
            return i;
        }
    }
    throw ContractError("signature rules: unknown metric '" + name + "'");
}

SignatureCondition cond(std::size_t metric, bool absolute, bool less, double threshold) {
    return {metric, absolute, less, threshold};
}

}  // namespace

// Thresholds frozen from runs of the reference controllers (seeds 1000..1004,
// T=1200, last 160 frames). Kept in sync with config/signature_rules.json.
SignatureClassifier SignatureClassifier::defaults() {
    SignatureClassifier c;
    c.version = 1;
    c.rules = {
        {"cyclic_pursuit",
         {cond(kGroupRotation, true, false, 0.005), cond(kRadialVariance, false, true, 0.003),
          cond(kScatter, false, true, 0.5)}},
        {"wall_following", {cond(kGroupRotation, true, false, 0.005), cond(kScatter, false, false, 0.5)}},
        {"aggregation", {cond(kScatter, false, true, 0.07)}},
        {"milling", {cond(kScatter, false, true, 0.4), cond(kAngularMomentum, true, false, 0.1)}},
        {"dispersal", {cond(kScatter, false, false, 0.85), cond(kAngularMomentum, true, true, 0.15)}},
    };
    c.fallback = "random";
    return c;
}

nlohmann::json SignatureClassifier::to_json() const {
    nlohmann::json rules = nlohmann::json::array();
    for (const auto& r : this->rules) {
        nlohmann::json conds = nlohmann::json::array();
        for (const auto& k : r.conditions) {
            conds.push_back({{"metric", kMetricNames[k.metric]},
                             {"abs", k.absolute},
                             {"op", k.less ? "<" : ">="},
                             {"value", k.threshold}});
        }
        rules.push_back({{"name", r.name}, {"all", conds}});
    }
    return {{"version", version}, {"rules", rules}, {"fallback", fallback}};
}

SignatureClassifier SignatureClassifier::from_json(const nlohmann::json& j) {
    SignatureClassifier c;
    c.version = j.at("version").get<int>();
    c.fallback = j.value("fallback", std::string{"random"});
    for (const auto& r : j.at("rules")) {
        SignatureRule rule;
        rule.name = r.at("name").get<std::string>();
        for (const auto& k : r.at("all")) {
            const auto op = k.at("op").get<std::string>();
            if (op != "<" && op != ">=") {
                throw ContractError("signature rules: op must be '<' or '>='");
            }
            rule.conditions.push_back(cond(metric_index(k.at("metric").get<std::string>()), k.value("abs", false),
                                           op == "<", k.at("value").get<double>()));
        }
        c.rules.push_back(std::move(rule));
    }
    return c;
}

SignatureClassifier SignatureClassifier::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open signature rules " + path.string());
    }
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("signature rules " + path.string() + ": " + e.what());
    }
}

std::optional<std::string> SignatureClassifier::match(const BehaviorVector& hand) const {
    for (const auto& r : rules) {
        const bool all = std::all_of(r.conditions.begin(), r.conditions.end(), [&](const SignatureCondition& k) {
            const double v = k.absolute ? std::abs(hand[k.metric]) : hand[k.metric];
            return k.less ? v < k.threshold : v >= k.threshold;
        });
        if (all) {
            return r.name;
        }
    }
    return std::nullopt;
}

std::string SignatureClassifier::classify(const BehaviorVector& hand) const {
    return match(hand).value_or(fallback);
}

std::vector<ReferenceController> reference_controllers() {
    return {
        {"milling", Controller::single(0.6, 1.0, 0.4, 0.5)},
        {"cyclic_pursuit", Controller::single(-0.7, 0.3, 1.0, 1.0)},
        {"aggregation", Controller::single(-0.7, -1.0, 1.0, -1.0)},
        {"dispersal", Controller::single(0.2, 0.7, -0.5, -0.1)},
        {"wall_following", Controller::single(1.0, 0.9, 1.0, 1.0)},
        {"random", Controller::single(-0.8, -0.7, 0.2, -0.5)},
    };
}

// ---------------------------------------------------------------------------
// Distinct behaviors.

nlohmann::json DistinctReport::to_json() const {
    return {{"distinct", distinct}, {"tallies", tallies}, {"medoid_labels", medoid_labels},
            {"unclassified", unclassified}};
}

std::string DistinctReport::row() const {
    std::ostringstream os;
    os << "distinct=" << distinct;
    for (const auto& [name, n] : tallies) {
        os << " | " << name << ": " << n;
    }
    return os.str();
}

namespace {

DistinctReport tally(std::vector<std::string> labels, std::vector<std::string> unclassified) {
    DistinctReport r;
    for (const auto& l : labels) {
        ++r.tallies[l];
    }
    r.distinct = r.tallies.size();
    r.medoid_labels = std::move(labels);
    r.unclassified = std::move(unclassified);
    return r;
}

// "g12-i7" -> (12, 7)
std::pair<std::size_t, std::size_t> parse_image_id(const std::string& id) {
    std::size_t g = 0;
    std::size_t i = 0;
    char tail = 0;
    if (std::sscanf(id.c_str(), "g%zu-i%zu%c", &g, &i, &tail) != 2) {
        throw ContractError("cannot derive rollout seed from image id '" + id + "'");
    }
    return {g, i};
}

}  // namespace

SignatureSource hand_signature_source(const Archive& archive, const EvolutionConfig& cfg) {
    if (archive.mapping_id() == kHandMappingId) {
        return [](const ArchiveEntry& e) { return e.behavior; };
    }
    return [cfg](const ArchiveEntry& e) {
        const auto [g, i] = parse_image_id(e.image_id);
        const auto traj = rollout(e.controller, CapabilityModel::for_kind(e.controller.kind()), cfg.environment,
                                  derive_seed(cfg.seed, g, i), cfg.horizon);
        return hand_crafted_embed(traj);
    };
}

DistinctReport count_distinct(const Archive& archive, const Taxonomy& taxonomy, const SignatureClassifier& classifier,
                              const SignatureSource& signatures) {
    if (taxonomy.medoids.empty()) {
        throw ContractError("count_distinct: empty taxonomy");
    }
    std::vector<std::string> labels;
    std::vector<std::string> unclassified;
    for (auto m : taxonomy.medoids) {
        const auto& entry = archive[m];
        const auto name = classifier.match(signatures(entry));
        if (!name) {
            unclassified.push_back(entry.image_id);
        }
        labels.push_back(name.value_or(classifier.fallback));
    }
    return tally(std::move(labels), std::move(unclassified));
}

DistinctReport count_distinct(const Archive& archive, const Taxonomy& taxonomy,
                              const std::map<std::string, std::string>& labels) {
    if (taxonomy.medoids.empty()) {
        throw ContractError("count_distinct: empty taxonomy");
    }
    if (labels.empty()) {
        throw ContractError("count_distinct: label file is empty");
    }
    std::vector<std::string> names;
    std::vector<std::string> unclassified;
    for (auto m : taxonomy.medoids) {
        const auto& id = archive[m].image_id;
        const auto it = labels.find(id);
        if (it == labels.end()) {
            std::clog << "count_distinct: no label for medoid " << id << ", counted as random\n";
            unclassified.push_back(id);
            names.emplace_back("random");
        } else {
            names.push_back(it->second);
        }
    }
    return tally(std::move(names), std::move(unclassified));
}

std::map<std::string, std::string> read_label_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open label file " + path.string());
    }
    std::map<std::string, std::string> labels;
    try {
        labels = nlohmann::json::parse(in).get<std::map<std::string, std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError("label file " + path.string() + ": " + e.what());
    }
    if (labels.empty()) {
        throw ContractError("label file " + path.string() + " has no labels");
    }
    return labels;
}

DistinctSeries distinct_over_generations(const Archive& archive, std::size_t k, std::size_t last,
                                         const std::function<DistinctReport(const Archive&, const Taxonomy&)>& count) {
    if (archive.empty() || last == 0) {
        throw ContractError("distinct_over_generations: empty archive or window");
    }
    const std::size_t final_gen = archive.entries().back().generation;
    const std::size_t first_gen = final_gen + 1 >= last ? final_gen + 1 - last : 0;
    const auto behaviors = archive.behaviors();
    DistinctSeries series;
    double sum = 0.0;
    for (std::size_t g = first_gen; g <= final_gen; ++g) {
        std::size_t prefix = 0;
        while (prefix < archive.size() && archive[prefix].generation <= g) {
            ++prefix;
        }
        if (prefix < k) {
            continue;
        }
        const auto tax = k_medoids(std::span<const BehaviorVector>(behaviors).first(prefix), k);
        series.generations.push_back(g);
        series.reports.push_back(count(archive, tax));
        sum += static_cast<double>(series.reports.back().distinct);
    }
    if (series.reports.empty()) {
        throw ContractError("distinct_over_generations: archive smaller than k");
    }
    series.mean_distinct = sum / static_cast<double>(series.reports.size());
    return series;
}

}  // namespace swarmtax
