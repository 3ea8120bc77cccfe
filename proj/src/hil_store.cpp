#include <fcntl.h>
#include <png.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <set>
#include <unordered_set>

#include "swarmtax/errors.hpp"
#include "swarmtax/hil.hpp"

namespace swarmtax {

// ---------------------------------------------------------------------------
// Label store.

LabelStore::LabelStore(std::filesystem::path journal) : journal_{std::move(journal)} {
    if (journal_.empty()) {
        return;
    }
    if (std::filesystem::exists(journal_)) {
        std::string content;
        {
            std::ifstream in(journal_, std::ios::binary);
            if (!in) {
                throw IoError("cannot read label journal " + journal_.string());
            }
            content.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
        }
        // a torn final line (crash mid-write) was never acknowledged; drop it
        const auto last_newline = content.rfind('\n');
        const std::size_t keep = last_newline == std::string::npos ? 0 : last_newline + 1;
        if (keep != content.size()) {
            std::clog << "label journal: dropping incomplete trailing record\n";
            std::filesystem::resize_file(journal_, keep);
            content.resize(keep);
        }
        std::size_t start = 0;
        std::size_t line_no = 0;
        while (start < content.size()) {
            const auto end = content.find('\n', start);
            const auto line = content.substr(start, end - start);
            start = end + 1;
            ++line_no;
            if (line.empty()) {
                continue;
            }
            try {
                apply(nlohmann::json::parse(line));
            } catch (const nlohmann::json::exception& e) {
                throw IoError("label journal line " + std::to_string(line_no) + ": " + e.what());
            }
        }
    }
    fd_ = ::open(journal_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) {
        throw IoError("cannot open label journal " + journal_.string() + ": " + std::strerror(errno));
    }
}

LabelStore::~LabelStore() {
    if (fd_ >= 0) {
        ::close(fd_);
    }
}

void LabelStore::append_line(const nlohmann::json& j) {
    if (fd_ < 0) {
        return;
    }
    const std::string line = j.dump() + "\n";
    std::size_t written = 0;
    while (written < line.size()) {
        const auto n = ::write(fd_, line.data() + written, line.size() - written);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw IoError(std::string("label journal write failed: ") + std::strerror(errno));
        }
        written += static_cast<std::size_t>(n);
    }
    if (::fsync(fd_) != 0) {
        throw IoError(std::string("label journal fsync failed: ") + std::strerror(errno));
    }
}

void LabelStore::apply(const nlohmann::json& j) {
    const auto type = j.at("type").get<std::string>();
    if (type == "class") {
        classes_.push_back({j.at("class_id").get<int>(), j.at("name").get<std::string>(),
                            j.value("exemplar", std::string{}), 0});
        return;
    }
    if (type != "label") {
        throw IoError("label journal: unknown record type '" + type + "'");
    }
    LabelRecord r;
    r.label_id = j.at("label_id").get<std::uint64_t>();
    r.query_id = j.at("query_id").get<std::string>();
    r.image_id = j.at("image_id").get<std::string>();
    r.class_id = j.at("class_id").get<int>();
    r.labeler_id = j.value("labeler_id", std::string{});
    r.timestamp = j.value("timestamp", std::int64_t{0});
    if (j.contains("new_class")) {
        classes_.push_back({r.class_id, j.at("new_class").get<std::string>(), r.image_id, 0});
    }
    by_query_[r.query_id] = history_.size();
    active_[r.image_id] = r.class_id;
    history_.push_back(std::move(r));
}

int LabelStore::ensure_class(const std::string& name) {
    std::lock_guard lock(mu_);
    for (const auto& c : classes_) {
        if (c.name == name) {
            return c.class_id;
        }
    }
    int id = 1;
    for (const auto& c : classes_) {
        id = std::max(id, c.class_id + 1);
    }
    const nlohmann::json j = {{"type", "class"}, {"class_id", id}, {"name", name}, {"exemplar", ""}};
    append_line(j);
    apply(j);
    return id;
}

LabelRecord LabelStore::submit(const std::string& query_id, const std::string& image_id, const ClassChoice& choice,
                               const std::string& labeler_id) {
    std::lock_guard lock(mu_);
    const auto class_name = [&](int id) -> const std::string* {
        for (const auto& c : classes_) {
            if (c.class_id == id) {
                return &c.name;
            }
        }
        return nullptr;
    };

    if (const auto it = by_query_.find(query_id); it != by_query_.end()) {
        const auto& prior = history_[it->second];
        const bool same = std::visit(
            [&](const auto& ch) {
                using T = std::decay_t<decltype(ch)>;
                if constexpr (std::is_same_v<T, ExistingClass>) {
                    return ch.class_id == prior.class_id;
                } else {
                    const auto* name = class_name(prior.class_id);
                    return name && *name == ch.name;
                }
            },
            choice);
        if (!same || prior.image_id != image_id) {
            throw LabelError(LabelError::Kind::conflict, "query " + query_id + " was already labeled differently");
        }
        return prior;
    }

    nlohmann::json j = {{"type", "label"},
                        {"label_id", history_.size() + 1},
                        {"query_id", query_id},
                        {"image_id", image_id},
                        {"labeler_id", labeler_id},
                        {"timestamp", std::chrono::duration_cast<std::chrono::seconds>(
                                          std::chrono::system_clock::now().time_since_epoch())
                                          .count()}};
    if (const auto* existing = std::get_if<ExistingClass>(&choice)) {
        if (!class_name(existing->class_id)) {
            throw LabelError(LabelError::Kind::unknown_class, "no class " + std::to_string(existing->class_id));
        }
        j["class_id"] = existing->class_id;
    } else {
        const auto& name = std::get<NewClass>(choice).name;
        if (name.empty()) {
            throw LabelError(LabelError::Kind::bad_request, "new_class_name must not be empty");
        }
        for (const auto& c : classes_) {
            if (c.name == name) {
                throw LabelError(LabelError::Kind::conflict, "class '" + name + "' already exists");
            }
        }
        int id = 1;
        for (const auto& c : classes_) {
            id = std::max(id, c.class_id + 1);
        }
        j["class_id"] = id;
        j["new_class"] = name;
    }
    append_line(j);
    apply(j);
    return history_.back();
}

std::optional<LabelRecord> LabelStore::find_query(const std::string& query_id) const {
    std::lock_guard lock(mu_);
    const auto it = by_query_.find(query_id);
    if (it == by_query_.end()) {
        return std::nullopt;
    }
    return history_[it->second];
}

std::vector<BehaviorClass> LabelStore::classes() const {
    std::lock_guard lock(mu_);
    auto out = classes_;
    for (auto& c : out) {
        c.count = static_cast<std::size_t>(
            std::count_if(active_.begin(), active_.end(), [&](const auto& kv) { return kv.second == c.class_id; }));
    }
    return out;
}

std::optional<BehaviorClass> LabelStore::find_class(int class_id) const {
    for (const auto& c : classes()) {
        if (c.class_id == class_id) {
            return c;
        }
    }
    return std::nullopt;
}

std::map<std::string, int> LabelStore::active_labels() const {
    std::lock_guard lock(mu_);
    return active_;
}

std::vector<LabelRecord> LabelStore::history() const {
    std::lock_guard lock(mu_);
    return history_;
}

std::size_t LabelStore::labeled_count() const {
    std::lock_guard lock(mu_);
    return active_.size();
}

std::uint64_t LabelStore::max_query_number() const {
    std::lock_guard lock(mu_);
    std::uint64_t best = 0;
    for (const auto& [q, idx] : by_query_) {
        if (q.size() > 1 && q[0] == 'q') {
            try {
                best = std::max<std::uint64_t>(best, std::stoull(q.substr(1)));
            } catch (const std::exception&) {
            }
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Query selection.

std::string to_string(QueryStatus s) {
    switch (s) {
        case QueryStatus::pending:
            return "pending";
        case QueryStatus::labeled:
            return "labeled";
        case QueryStatus::skipped:
            return "skipped";
    }
    return "pending";
}

std::optional<std::size_t> select_query(const std::vector<std::vector<float>>& features,
                                        const std::vector<bool>& labeled, const std::vector<bool>& queried, Rng& rng) {
    const std::size_t n = features.size();
    if (labeled.size() != n || queried.size() != n) {
        throw ContractError("select_query: feature and flag lengths differ");
    }
    std::vector<std::size_t> candidates;
    std::vector<std::size_t> anchors;
    for (std::size_t i = 0; i < n; ++i) {
        if (labeled[i]) {
            anchors.push_back(i);
        } else if (!queried[i]) {
            candidates.push_back(i);
        }
    }
    if (candidates.empty()) {
        return std::nullopt;
    }
    if (anchors.empty()) {
        return candidates[rng.below(candidates.size())];
    }
    std::size_t best = candidates.front();
    double best_d = -1.0;
    for (auto c : candidates) {
        double nearest = std::numeric_limits<double>::infinity();
        for (auto a : anchors) {
            double s = 0.0;
            for (std::size_t d = 0; d < features[c].size(); ++d) {
                const double diff = static_cast<double>(features[c][d]) - features[a][d];
                s += diff * diff;
            }
            nearest = std::min(nearest, s);
        }
        if (nearest > best_d) {
            best_d = nearest;
            best = c;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Triplets.

std::uint64_t label_triplet_count(const std::vector<std::size_t>& class_sizes) {
    const std::uint64_t m = std::accumulate(class_sizes.begin(), class_sizes.end(), std::uint64_t{0});
    std::uint64_t total = 0;
    for (std::uint64_t s : class_sizes) {
        if (s >= 2) {
            total += s * (s - 1) / 2 * (m - s);
        }
    }
    return total;
}

LabelTriplets::LabelTriplets(const std::vector<int>& classes) {
    std::map<int, Block> by_class;
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (classes[i] >= 0) {
            by_class[classes[i]].members.push_back(static_cast<std::uint32_t>(i));
        }
    }
    for (auto& [cls, block] : by_class) {
        for (std::size_t i = 0; i < classes.size(); ++i) {
            if (classes[i] >= 0 && classes[i] != cls) {
                block.others.push_back(static_cast<std::uint32_t>(i));
            }
        }
        const std::uint64_t s = block.members.size();
        block.size = s * (s - 1) / 2 * block.others.size();
        block.offset = total_;
        total_ += block.size;
        if (block.size > 0) {
            blocks_.push_back(std::move(block));
        }
    }
}

IndexTriplet LabelTriplets::at(std::uint64_t index) const {
    if (index >= total_) {
        throw ContractError("LabelTriplets: index out of range");
    }
    const auto it = std::upper_bound(blocks_.begin(), blocks_.end(), index,
                                     [](std::uint64_t v, const Block& b) { return v < b.offset; });
    const Block& b = *(it - 1);
    const std::uint64_t local = index - b.offset;
    std::uint64_t pair = local / b.others.size();
    const std::uint64_t neg = local % b.others.size();
    const std::uint64_t s = b.members.size();
    std::uint64_t i = 0;
    while (pair >= s - 1 - i) {
        pair -= s - 1 - i;
        ++i;
    }
    const std::uint64_t j = i + 1 + pair;
    return {b.members[i], b.members[j], b.others[neg], false};
}

std::vector<IndexTriplet> LabelTriplets::all() const {
    std::vector<IndexTriplet> out;
    out.reserve(total_);
    for (std::uint64_t i = 0; i < total_; ++i) {
        out.push_back(at(i));
    }
    return out;
}

std::vector<IndexTriplet> LabelTriplets::sample(std::uint64_t count, Rng& rng) const {
    if (count >= total_) {
        return all();
    }
    // Floyd's algorithm, then sorted for a stable order.
    std::unordered_set<std::uint64_t> picked;
    std::vector<std::uint64_t> order;
    order.reserve(count);
    for (std::uint64_t j = total_ - count; j < total_; ++j) {
        const std::uint64_t t = rng.below(j + 1);
        const std::uint64_t v = picked.insert(t).second ? t : j;
        if (v == j) {
            picked.insert(j);
        }
        order.push_back(v);
    }
    std::sort(order.begin(), order.end());
    std::vector<IndexTriplet> out;
    out.reserve(count);
    for (auto idx : order) {
        out.push_back(at(idx));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fine-tuning.

nlohmann::json FinetuneResult::metrics() const {
    nlohmann::json j = {{"triplet_count", triplet_count},
                        {"reverted", reverted},
                        {"epochs", loss_log.size()},
                        {"note", note}};
    j["accuracy_before"] = accuracy_before ? nlohmann::json(*accuracy_before) : nlohmann::json(nullptr);
    j["accuracy_after"] = accuracy_after ? nlohmann::json(*accuracy_after) : nlohmann::json(nullptr);
    j["final_loss"] = loss_log.empty() ? nlohmann::json(nullptr) : nlohmann::json(loss_log.back());
    return j;
}

FinetuneResult finetune(const EmbeddingNet<float>& start, const std::vector<TrajectoryImage>& images,
                        const std::vector<std::string>& labels, const FinetuneOptions& options) {
    if (images.size() != labels.size()) {
        throw ContractError("finetune: images and labels differ in length");
    }
    options.train.validate();
    FinetuneResult result{start, 0, std::nullopt, std::nullopt, false, {}, {}};

    std::map<std::string, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!labels[i].empty()) {
            members[labels[i]].push_back(i);
        }
    }
    std::vector<std::size_t> sizes;
    for (const auto& [name, m] : members) {
        sizes.push_back(m.size());
    }
    if (label_triplet_count(sizes) == 0) {
        result.note = "no label triplets; parameters unchanged";
        std::clog << "finetune: " << result.note << '\n';
        return result;
    }

    // stratified hold-out, at least one training member per class
    Rng rng(derive_seed(options.seed, 0x401d));
    std::vector<int> train_class(images.size(), -1);
    std::vector<std::size_t> held;
    int cls = 0;
    for (auto& [name, m] : members) {
        auto shuffled = m;
        for (std::size_t i = shuffled.size(); i > 1; --i) {
            std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
        }
        auto h = static_cast<std::size_t>(std::floor(options.holdout_fraction * static_cast<double>(m.size())));
        h = std::min(h, m.size() - 1);
        for (std::size_t i = 0; i < shuffled.size(); ++i) {
            if (i < h) {
                held.push_back(shuffled[i]);
            } else {
                train_class[shuffled[i]] = cls;
            }
        }
        ++cls;
    }
    std::sort(held.begin(), held.end());

    const LabelTriplets triplets(train_class);
    result.triplet_count = triplets.size();
    if (triplets.size() == 0) {
        result.note = "training split has no triplets; parameters unchanged";
        std::clog << "finetune: " << result.note << '\n';
        return result;
    }

    std::vector<TrajectoryImage> held_images;
    std::vector<std::string> held_labels;
    for (auto i : held) {
        held_images.push_back(images[i]);
        held_labels.push_back(labels[i]);
    }
    const bool can_score = !held.empty() && admissible_triplet_count(held_labels) > 0;
    if (can_score) {
        result.accuracy_before = l2_accuracy(embed_images(start, held_images), held_labels, "net").percentage;
    }

    const std::uint64_t per_epoch = options.train.triplets_per_epoch;
    const EpochSampler sampler = [&](std::size_t, Rng& r) { return triplets.sample(per_epoch, r); };
    auto trained = train_triplets(start, images, sampler, options.train, derive_seed(options.seed, 0xf17e));
    result.loss_log = std::move(trained.loss_log);

    if (!can_score) {
        result.net = std::move(trained.net);
        result.note = "hold-out split has no admissible triplets; guardrail skipped";
        std::clog << "finetune: " << result.note << '\n';
        return result;
    }
    result.accuracy_after = l2_accuracy(embed_images(trained.net, held_images), held_labels, "net").percentage;
    if (*result.accuracy_after < *result.accuracy_before - options.guardrail_points) {
        result.reverted = true;
        result.note = "held-out accuracy fell by more than the guardrail; kept pre-finetune parameters";
        std::clog << "finetune: " << result.note << " (" << *result.accuracy_before << " -> "
                  << *result.accuracy_after << ")\n";
        return result;
    }
    result.net = std::move(trained.net);
    return result;
}

// ---------------------------------------------------------------------------
// PNG.

std::vector<unsigned char> encode_png(const TrajectoryImage& image) {
    std::vector<unsigned char> gray(image.pixels.size());
    for (std::size_t i = 0; i < gray.size(); ++i) {
        gray[i] = static_cast<unsigned char>(std::lround(std::clamp(image.pixels[i], 0.0f, 1.0f) * 255.0f));
    }
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.side);
    png.height = static_cast<png_uint_32>(image.side);
    png.format = PNG_FORMAT_GRAY;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&png, nullptr, &size, 0, gray.data(), 0, nullptr)) {
        throw IoError(std::string("png encode failed: ") + png.message);
    }
    std::vector<unsigned char> out(size);
    if (!png_image_write_to_memory(&png, out.data(), &size, 0, gray.data(), 0, nullptr)) {
        throw IoError(std::string("png encode failed: ") + png.message);
    }
    out.resize(size);
    return out;
}

TrajectoryImage decode_png(const std::vector<unsigned char>& bytes) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
        throw IoError(std::string("png decode failed: ") + png.message);
    }
    if (png.width != png.height) {
        png_image_free(&png);
        throw IoError("png decode: image is not square");
    }
    png.format = PNG_FORMAT_GRAY;
    std::vector<unsigned char> gray(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, gray.data(), 0, nullptr)) {
        throw IoError(std::string("png decode failed: ") + png.message);
    }
    TrajectoryImage img(static_cast<int>(png.width));
    for (std::size_t i = 0; i < gray.size(); ++i) {
        img.pixels[i] = static_cast<float>(gray[i]) / 255.0f;
    }
    return img;
}

}  // namespace swarmtax
