#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "swarmtax/embed_net.hpp"
#include "swarmtax/eval.hpp"
#include "swarmtax/render.hpp"

namespace swarmtax {

// ---------------------------------------------------------------------------
// Label store.

struct LabelRecord {
    std::uint64_t label_id = 0;
    std::string query_id;
    std::string image_id;
    int class_id = 0;
    std::string labeler_id;
    std::int64_t timestamp = 0;  // unix seconds

    friend bool operator==(const LabelRecord&, const LabelRecord&) = default;
};

struct BehaviorClass {
    int class_id = 0;
    std::string name;
    std::string exemplar;  // image id, empty for seeded classes
    std::size_t count = 0;
};

struct ExistingClass {
    int class_id;
};
struct NewClass {
    std::string name;
};
using ClassChoice = std::variant<ExistingClass, NewClass>;

/// Label submission failed for a reason the client can act on.
struct LabelError : std::runtime_error {
    enum class Kind { unknown_query, unknown_class, conflict, bad_request };
    LabelError(Kind k, const std::string& what) : std::runtime_error(what), kind{k} {}
    Kind kind;
};

/// Append-only journal of labels and classes (one JSON object per line),
/// with an in-memory index rebuilt from the journal on construction. Every
/// write is flushed and fsync'd before it returns.
class LabelStore {
  public:
    /// An empty path keeps the store in memory only.
    explicit LabelStore(std::filesystem::path journal = {});
    ~LabelStore();
    LabelStore(const LabelStore&) = delete;
    LabelStore& operator=(const LabelStore&) = delete;

    /// Creates a class with no exemplar unless one with this name exists.
    int ensure_class(const std::string& name);

    /// Records a label. A repeated query_id with the same choice returns the
    /// original record; with a different choice it is a conflict.
    LabelRecord submit(const std::string& query_id, const std::string& image_id, const ClassChoice& choice,
                       const std::string& labeler_id);

    std::optional<LabelRecord> find_query(const std::string& query_id) const;
    std::vector<BehaviorClass> classes() const;
    std::optional<BehaviorClass> find_class(int class_id) const;
    /// Latest label per image.
    std::map<std::string, int> active_labels() const;
    std::vector<LabelRecord> history() const;
    std::size_t labeled_count() const;
    /// Largest numeric suffix among journaled query ids ("q17" -> 17).
    std::uint64_t max_query_number() const;

  private:
    void append_line(const nlohmann::json& j);
    void apply(const nlohmann::json& j);

    std::filesystem::path journal_;
    mutable std::mutex mu_;
    std::vector<BehaviorClass> classes_;
    std::vector<LabelRecord> history_;
    std::map<std::string, std::size_t> by_query_;  // query id -> history index
    std::map<std::string, int> active_;
    int fd_ = -1;
};

// ---------------------------------------------------------------------------
// Query selection.

enum class QueryStatus { pending, labeled, skipped };
std::string to_string(QueryStatus s);

struct QueryItem {
    std::string query_id;
    std::string image_id;
    QueryStatus status = QueryStatus::pending;
};

/// Picks, among images neither labeled nor already queried, the one whose
/// nearest labeled neighbor is farthest in feature space. With no labels the
/// pick is uniform at random. Ties go to the lower index.
std::optional<std::size_t> select_query(const std::vector<std::vector<float>>& features,
                                        const std::vector<bool>& labeled, const std::vector<bool>& queried, Rng& rng);

// ---------------------------------------------------------------------------
// Label-driven triplets.

/// Sum over classes of C(|c|, 2) * (M - |c|).
std::uint64_t label_triplet_count(const std::vector<std::size_t>& class_sizes);

/// Index-addressable enumeration of every (unordered same-class pair,
/// out-of-class negative). Class order is by class index, pairs (i < j) in
/// member order, negatives in image order.
class LabelTriplets {
  public:
    /// classes[i] is the class index of image i (negative = unlabeled, skipped).
    explicit LabelTriplets(const std::vector<int>& classes);

    std::uint64_t size() const noexcept { return total_; }
    IndexTriplet at(std::uint64_t index) const;
    std::vector<IndexTriplet> all() const;
    /// Uniform sample of `count` distinct indices (all when count >= size).
    std::vector<IndexTriplet> sample(std::uint64_t count, Rng& rng) const;

  private:
    struct Block {
        std::vector<std::uint32_t> members;
        std::vector<std::uint32_t> others;
        std::uint64_t offset = 0;
        std::uint64_t size = 0;
    };
    std::vector<Block> blocks_;
    std::uint64_t total_ = 0;
};

// ---------------------------------------------------------------------------
// Fine-tuning.

struct FinetuneOptions {
    TrainConfig train{};
    double holdout_fraction = 0.2;
    double guardrail_points = 1.0;
    std::uint64_t seed = 0;
};

struct FinetuneResult {
    EmbeddingNet<float> net;
    std::uint64_t triplet_count = 0;
    std::optional<double> accuracy_before;  // on the held-out split
    std::optional<double> accuracy_after;
    bool reverted = false;
    std::vector<double> loss_log;
    std::string note;

    nlohmann::json metrics() const;
};

/// Continues training on label-synthesized triplets. Labels are per image
/// (empty string = unlabeled). A stratified share of the labeled images is
/// held out; if held-out accuracy drops by more than the guardrail the
/// pre-finetune parameters are returned.
FinetuneResult finetune(const EmbeddingNet<float>& start, const std::vector<TrajectoryImage>& images,
                        const std::vector<std::string>& labels, const FinetuneOptions& options);

// ---------------------------------------------------------------------------
// PNG (8-bit grayscale) for the browser.

std::vector<unsigned char> encode_png(const TrajectoryImage& image);
TrajectoryImage decode_png(const std::vector<unsigned char>& bytes);

// ---------------------------------------------------------------------------
// HTTP service.

struct ServiceConfig {
    std::filesystem::path manifest;  // dataset manifest (images resolved next to it)
    std::filesystem::path journal;   // label journal
    std::optional<std::filesystem::path> checkpoint;
    std::optional<std::filesystem::path> finetune_out;  // checkpoint written after each accepted fine-tune
    std::vector<std::string> seed_classes;
    double budget_fraction = 0.01;
    std::string token;  // empty: no auth
    FinetuneOptions finetune{};
    std::uint64_t seed = 0;
};

class HilService {
  public:
    explicit HilService(ServiceConfig cfg);
    ~HilService();

    /// Blocks serving on host:port. port 0 picks a free port.
    void listen(const std::string& host, int port);
    /// Binds, then serves on a background thread. Returns the port.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    void stop();

    /// Waits for any fine-tune job to finish.
    void join_jobs();

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace swarmtax
