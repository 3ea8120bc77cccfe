#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "swarmtax/behavior.hpp"
#include "swarmtax/controller.hpp"
#include "swarmtax/discovery.hpp"
#include "swarmtax/embed_net.hpp"
#include "swarmtax/render.hpp"
#include "swarmtax/sim.hpp"

namespace swarmtax {

// ---------------------------------------------------------------------------
// L2 triplet accuracy.

struct AccuracyReport {
    std::string mapping_id;
    std::uint64_t admissible = 0;
    std::uint64_t correct = 0;
    double percentage = 0.0;

    nlohmann::json to_json() const;
};

/// Number of (a, p, n) with label(a) = label(p) != label(n), a != p, counting
/// (a, p) and (p, a) separately.
std::uint64_t admissible_triplet_count(std::span<const std::string> labels);

/// A triplet is correct iff |a - p| < |a - n| (ties are incorrect).
AccuracyReport l2_accuracy(std::span<const BehaviorVector> embeddings, std::span<const std::string> labels,
                           std::string mapping_id);

/// Forward every image through the network in batches of `batch`.
std::vector<BehaviorVector> embed_images(const EmbeddingNet<float>& net, std::span<const TrajectoryImage> images,
                                         std::size_t batch = 64);

struct BaselineReport {
    std::vector<double> percentages;  // per seed
    double mean = 0.0;
};

/// Accuracy of freshly initialized networks, seeds derive_seed(seed, trial).
BaselineReport random_init_baseline(const NetworkSpec& spec, std::span<const TrajectoryImage> images,
                                    std::span<const std::string> labels, std::size_t trials, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Dataset manifests.

struct ManifestRecord {
    std::string id;
    Controller controller;
    CapabilityKind kind = CapabilityKind::single_sensor;
    std::uint64_t seed = 0;
    std::string image_path;  // relative to the manifest's directory
    std::optional<std::string> label;

    friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

struct DatasetManifest {
    std::vector<ManifestRecord> records;

    friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

nlohmann::json to_json(const ManifestRecord& record);
ManifestRecord manifest_record_from_json(const nlohmann::json& j);

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
/// Checks unique ids; with check_images, also that every image file exists.
DatasetManifest read_manifest(const std::filesystem::path& path, bool check_images = false);

/// Images in manifest order; paths are resolved against base_dir.
std::vector<TrajectoryImage> load_images(const DatasetManifest& manifest, const std::filesystem::path& base_dir);

struct DatasetConfig {
    std::size_t count = 10000;
    CapabilityKind kind = CapabilityKind::single_sensor;
    std::uint64_t seed = 0;
    bool filter = true;
    FilterConfig filter_config{};
    Environment environment{};
    std::size_t horizon = 1200;

    void validate() const;
    nlohmann::json to_json() const;
    static DatasetConfig from_json(const nlohmann::json& j);
};

/// The controllers build_dataset would record, in order (grid sampling,
/// rejection against the filter when it is on).
std::vector<Controller> sample_dataset_controllers(const DatasetConfig& cfg);

/// Rolls out, renders and writes out_dir/images/{id}.pgm plus
/// out_dir/manifest.jsonl. Returns the manifest.
DatasetManifest build_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir);

// ---------------------------------------------------------------------------
// Behavior signatures.

struct SignatureCondition {
    std::size_t metric = 0;  // index into the hand-crafted vector
    bool absolute = false;
    bool less = true;  // value < threshold, else value >= threshold
    double threshold = 0.0;
};

struct SignatureRule {
    std::string name;
    std::vector<SignatureCondition> conditions;  // all must hold
};

/// Ordered rules over hand-crafted metrics; the first matching rule names the
/// behavior, otherwise `fallback`.
struct SignatureClassifier {
    int version = 1;
    std::vector<SignatureRule> rules;
    std::string fallback = "random";

    static SignatureClassifier defaults();
    static SignatureClassifier from_json(const nlohmann::json& j);
    static SignatureClassifier load(const std::filesystem::path& path);
    nlohmann::json to_json() const;

    /// Returns nullopt for the fallback class.
    std::optional<std::string> match(const BehaviorVector& hand) const;
    std::string classify(const BehaviorVector& hand) const;
};

/// The six reference controllers the default rules were calibrated on.
struct ReferenceController {
    std::string name;
    Controller controller;
};
std::vector<ReferenceController> reference_controllers();

// ---------------------------------------------------------------------------
// Distinct behaviors.

struct DistinctReport {
    std::size_t distinct = 0;
    std::map<std::string, std::size_t> tallies;
    std::vector<std::string> medoid_labels;
    std::vector<std::string> unclassified;  // medoid image ids counted as random

    nlohmann::json to_json() const;
    /// "distinct=N | name: count | ..." in name order.
    std::string row() const;
};

/// Hand-crafted metrics for an archive entry. Stored vectors are used when
/// the archive was built with the hand mapping; otherwise the entry's rollout
/// is replayed from its image id and the evolution config.
using SignatureSource = std::function<BehaviorVector(const ArchiveEntry&)>;
SignatureSource hand_signature_source(const Archive& archive, const EvolutionConfig& cfg);

/// Labels medoids with the classifier.
DistinctReport count_distinct(const Archive& archive, const Taxonomy& taxonomy, const SignatureClassifier& classifier,
                              const SignatureSource& signatures);

/// Labels medoids from an image_id -> class map; missing ids count as random.
DistinctReport count_distinct(const Archive& archive, const Taxonomy& taxonomy,
                              const std::map<std::string, std::string>& labels);

/// Reads a JSON object {image_id: class_name}. An empty map is an error.
std::map<std::string, std::string> read_label_file(const std::filesystem::path& path);

struct DistinctSeries {
    std::vector<std::size_t> generations;
    std::vector<DistinctReport> reports;
    double mean_distinct = 0.0;
};

/// For each of the last `last` generations g, clusters the archive prefix
/// holding generations 0..g into k medoids and counts distinct behaviors.
DistinctSeries distinct_over_generations(const Archive& archive, std::size_t k, std::size_t last,
                                         const std::function<DistinctReport(const Archive&, const Taxonomy&)>& count);

}  // namespace swarmtax
