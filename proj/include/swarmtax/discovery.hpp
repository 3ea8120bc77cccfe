#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "swarmtax/behavior.hpp"
#include "swarmtax/controller.hpp"
#include "swarmtax/embed_net.hpp"
#include "swarmtax/sim.hpp"

namespace swarmtax {

// ---------------------------------------------------------------------------
// Behavior mappings.

class BehaviorMapping {
  public:
    virtual ~BehaviorMapping() = default;
    virtual std::string id() const = 0;
    virtual BehaviorVector map(const Trajectory& trajectory) const = 0;
};

class HandCraftedMapping final : public BehaviorMapping {
  public:
    explicit HandCraftedMapping(std::size_t window = kRenderWindow) : window_{window} {}
    std::string id() const override { return kHandMappingId; }
    BehaviorVector map(const Trajectory& trajectory) const override;

  private:
    std::size_t window_;
};

/// Renders the trajectory and embeds the image with a trained network.
class NetworkMapping final : public BehaviorMapping {
  public:
    NetworkMapping(EmbeddingNet<float> net, std::string id);
    std::string id() const override { return id_; }
    BehaviorVector map(const Trajectory& trajectory) const override;
    BehaviorVector map_image(const TrajectoryImage& image) const;

  private:
    EmbeddingNet<float> net_;
    std::string id_;
};

/// "hand" or "net:<checkpoint path>".
std::unique_ptr<BehaviorMapping> make_mapping(const std::string& spec);

// ---------------------------------------------------------------------------
// Archive.

struct ArchiveEntry {
    std::size_t generation = 0;
    Controller controller;
    BehaviorVector behavior;
    std::string image_id;

    friend bool operator==(const ArchiveEntry&, const ArchiveEntry&) = default;
};

nlohmann::json to_json(const ArchiveEntry& entry);
ArchiveEntry archive_entry_from_json(const nlohmann::json& j);

/// Append-only store of every evaluated behavior. Optionally mirrors each
/// append to a line-delimited JSON file.
class Archive {
  public:
    explicit Archive(std::string mapping_id = {}) : mapping_id_{std::move(mapping_id)} {}

    const std::string& mapping_id() const noexcept { return mapping_id_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    const ArchiveEntry& operator[](std::size_t i) const { return entries_[i]; }
    const std::vector<ArchiveEntry>& entries() const noexcept { return entries_; }
    std::vector<BehaviorVector> behaviors() const;

    void append(ArchiveEntry entry);

    /// Starts mirroring appends to `path` (truncates the file and writes the
    /// current contents first).
    void persist_to(const std::filesystem::path& path);

    void save(const std::filesystem::path& path) const;
    static Archive load(const std::filesystem::path& path);

  private:
    std::string mapping_id_;
    std::vector<ArchiveEntry> entries_;
    std::unique_ptr<std::ofstream> sink_;
};

// ---------------------------------------------------------------------------
// Novelty search.

/// Mean Euclidean distance to the k nearest archive behaviors (all of them
/// when the archive holds fewer than k). An empty archive gives +infinity.
double novelty(const BehaviorVector& b, std::span<const BehaviorVector> archive, std::size_t k);

struct EvolutionConfig {
    std::size_t population = 100;
    std::size_t generations = 100;
    std::size_t novelty_k = 15;
    double mutation_rate = 0.1;   // per gene
    double mutation_sigma = 0.1;
    double crossover_rate = 0.5;  // per gene, probability of taking the second parent's gene
    std::size_t child_retries = 20;
    bool filter = true;
    FilterConfig filter_config{};
    CapabilityKind kind = CapabilityKind::single_sensor;
    Environment environment{};
    std::size_t horizon = 1200;
    std::uint64_t seed = 0;
    /// When set, every evaluated behavior image is written as {image_id}.pgm.
    std::optional<std::filesystem::path> image_dir;

    void validate() const;
    nlohmann::json to_json() const;
    static EvolutionConfig from_json(const nlohmann::json& j);
};

/// Indices of the `count` most novel entries; ties keep index order.
std::vector<std::size_t> select_parents(std::span<const double> novelty_scores, std::size_t count);

/// Gaussian per-gene mutation, clamped to [-1, 1] and snapped to the 0.1
/// grid; the sensor angle moves to an adjacent admissible angle.
Controller mutate(const Controller& c, const EvolutionConfig& cfg, Rng& rng);
Controller crossover(const Controller& a, const Controller& b, const EvolutionConfig& cfg, Rng& rng);

std::string image_id_for(std::size_t generation, std::size_t index);

/// Evaluates `population`, appends every behavior to the archive, ranks by
/// novelty against the archive as it was before this generation, and breeds
/// the next population from the top half.
std::vector<Controller> evolve_generation(std::span<const Controller> population, Archive& archive,
                                          const BehaviorMapping& mapping, const EvolutionConfig& cfg,
                                          std::size_t generation, Rng& rng);

/// Initial population drawn from the grid (filtered when cfg.filter).
std::vector<Controller> initial_population(const EvolutionConfig& cfg, Rng& rng);

using GenerationCallback = std::function<void(std::size_t generation, const Archive& archive)>;

Archive run_novelty_search(const EvolutionConfig& cfg, const BehaviorMapping& mapping,
                           const std::optional<std::filesystem::path>& archive_path = std::nullopt,
                           const GenerationCallback& on_generation = {});

// ---------------------------------------------------------------------------
// k-medoids.

struct Taxonomy {
    std::vector<std::size_t> medoids;      // indices into the clustered points
    std::vector<std::size_t> assignments;  // per point, index into medoids
    double cost = 0.0;
    std::vector<double> cost_history;  // after build, then after each accepted swap

    std::size_t k() const noexcept { return medoids.size(); }
};

/// Partitioning around medoids: greedy build, then best-improvement swaps
/// until no swap lowers the total distance. Ties resolve to lower indices.
Taxonomy k_medoids(std::span<const BehaviorVector> points, std::size_t k);

}  // namespace swarmtax
