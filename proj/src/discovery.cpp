#include "swarmtax/discovery.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "swarmtax/errors.hpp"
#include "swarmtax/render.hpp"

namespace swarmtax {

// ---------------------------------------------------------------------------
// Mappings.

BehaviorVector HandCraftedMapping::map(const Trajectory& trajectory) const {
    return hand_crafted_embed(trajectory, window_);
}

NetworkMapping::NetworkMapping(EmbeddingNet<float> net, std::string id) : net_{std::move(net)}, id_{std::move(id)} {
    if (net_.spec().output_dim() != static_cast<int>(kBehaviorDims)) {
        throw ContractError("network mapping requires a 5-dimensional output");
    }
}

BehaviorVector NetworkMapping::map_image(const TrajectoryImage& image) const {
    auto b = net_.embed(image);
    b.mapping_id = id_;
    return b;
}

BehaviorVector NetworkMapping::map(const Trajectory& trajectory) const {
    return map_image(render(trajectory, kRenderWindow, net_.spec().input_side));
}

std::unique_ptr<BehaviorMapping> make_mapping(const std::string& spec) {
    if (spec == "hand") {
        return std::make_unique<HandCraftedMapping>();
    }
    if (spec.rfind("net:", 0) == 0) {
        const std::filesystem::path path = spec.substr(4);
        return std::make_unique<NetworkMapping>(load_checkpoint(path), "net:" + path.filename().string());
    }
    throw ContractError("mapping must be 'hand' or 'net:<checkpoint>', got '" + spec + "'");
}

// ---------------------------------------------------------------------------
// Archive.

nlohmann::json to_json(const ArchiveEntry& entry) {
    return {
        {"generation", entry.generation},
        {"controller", entry.controller.genome()},
        {"behavior_vector", entry.behavior.values},
        {"image_id", entry.image_id},
        {"mapping_id", entry.behavior.mapping_id},
    };
}

ArchiveEntry archive_entry_from_json(const nlohmann::json& j) {
    ArchiveEntry e;
    e.generation = j.at("generation").get<std::size_t>();
    const auto genome = j.at("controller").get<std::vector<double>>();
    e.controller = Controller::from_genome(genome);
    const auto values = j.at("behavior_vector").get<std::vector<double>>();
    if (values.size() != kBehaviorDims) {
        throw ContractError("archive behavior vector must have 5 entries");
    }
    std::copy(values.begin(), values.end(), e.behavior.values.begin());
    e.behavior.mapping_id = j.value("mapping_id", std::string{});
    e.image_id = j.at("image_id").get<std::string>();
    return e;
}

std::vector<BehaviorVector> Archive::behaviors() const {
    std::vector<BehaviorVector> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) {
        out.push_back(e.behavior);
    }
    return out;
}

void Archive::append(ArchiveEntry entry) {
    if (mapping_id_.empty()) {
        mapping_id_ = entry.behavior.mapping_id;
    } else if (entry.behavior.mapping_id != mapping_id_) {
        throw ContractError("archive mixes mappings: '" + mapping_id_ + "' and '" + entry.behavior.mapping_id + "'");
    }
    if (sink_) {
        *sink_ << to_json(entry).dump() << '\n';
        sink_->flush();
        if (!*sink_) {
            throw IoError("archive append failed");
        }
    }
    entries_.push_back(std::move(entry));
}

void Archive::persist_to(const std::filesystem::path& path) {
    auto sink = std::make_unique<std::ofstream>(path, std::ios::trunc);
    if (!*sink) {
        throw IoError("cannot open archive file " + path.string());
    }
    for (const auto& e : entries_) {
        *sink << to_json(e).dump() << '\n';
    }
    sink->flush();
    sink_ = std::move(sink);
}

void Archive::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot open archive file " + path.string());
    }
    for (const auto& e : entries_) {
        out << to_json(e).dump() << '\n';
    }
    if (!out) {
        throw IoError("archive write failed: " + path.string());
    }
}

Archive Archive::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open archive file " + path.string());
    }
    Archive archive;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            archive.append(archive_entry_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw IoError("archive line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return archive;
}

// ---------------------------------------------------------------------------
// Novelty.

double novelty(const BehaviorVector& b, std::span<const BehaviorVector> archive, std::size_t k) {
    if (k == 0) {
        throw ContractError("novelty: k must be >= 1");
    }
    if (archive.empty()) {
        return std::numeric_limits<double>::infinity();
    }
    std::vector<double> d;
    d.reserve(archive.size());
    for (const auto& a : archive) {
        d.push_back(euclidean(b, a));
    }
    const std::size_t m = std::min(k, d.size());
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(m), d.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        sum += d[i];
    }
    return sum / static_cast<double>(m);
}

// ---------------------------------------------------------------------------
// Evolution.

void EvolutionConfig::validate() const {
    if (population == 0 || generations == 0 || novelty_k == 0 || horizon < kRenderWindow + 1) {
        throw ContractError("evolution config: population, generations, novelty_k must be > 0 and horizon > 160");
    }
    if (mutation_rate < 0 || mutation_rate > 1 || crossover_rate < 0 || crossover_rate > 1 || mutation_sigma < 0) {
        throw ContractError("evolution config: rates must lie in [0, 1]");
    }
}

nlohmann::json EvolutionConfig::to_json() const {
    nlohmann::json j = {
        {"population", population},
        {"generations", generations},
        {"novelty_k", novelty_k},
        {"mutation_rate", mutation_rate},
        {"mutation_sigma", mutation_sigma},
        {"crossover_rate", crossover_rate},
        {"child_retries", child_retries},
        {"filter", filter},
        {"capability", swarmtax::to_string(kind)},
        {"agents", environment.agent_count},
        {"width", environment.width},
        {"height", environment.height},
        {"horizon", horizon},
        {"seed", seed},
    };
    return j;
}

EvolutionConfig EvolutionConfig::from_json(const nlohmann::json& j) {
    EvolutionConfig c;
    c.population = j.value("population", c.population);
    c.generations = j.value("generations", c.generations);
    c.novelty_k = j.value("novelty_k", c.novelty_k);
    c.mutation_rate = j.value("mutation_rate", c.mutation_rate);
    c.mutation_sigma = j.value("mutation_sigma", c.mutation_sigma);
    c.crossover_rate = j.value("crossover_rate", c.crossover_rate);
    c.child_retries = j.value("child_retries", c.child_retries);
    c.filter = j.value("filter", c.filter);
    if (j.contains("capability")) {
        c.kind = capability_from_string(j.at("capability").get<std::string>());
    }
    c.environment.agent_count = j.value("agents", c.environment.agent_count);
    c.environment.width = j.value("width", c.environment.width);
    c.environment.height = j.value("height", c.environment.height);
    c.horizon = j.value("horizon", c.horizon);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

std::vector<std::size_t> select_parents(std::span<const double> novelty_scores, std::size_t count) {
    std::vector<std::size_t> order(novelty_scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return novelty_scores[a] > novelty_scores[b]; });
    order.resize(std::min(count, order.size()));
    return order;
}

namespace {

double snap_to_grid(double v) {
    return std::clamp(std::round(v * 10.0), -10.0, 10.0) / 10.0;
}

}  // namespace

Controller mutate(const Controller& c, const EvolutionConfig& cfg, Rng& rng) {
    auto genome = c.genome();
    const std::size_t velocities = c.velocities().size();
    for (std::size_t g = 0; g < velocities; ++g) {
        double v = genome[g];
        if (rng.bernoulli(cfg.mutation_rate)) {
            v += cfg.mutation_sigma * rng.normal();
        }
        genome[g] = snap_to_grid(std::clamp(v, -1.0, 1.0));
    }
    if (c.sensor_angle()) {
        auto idx = static_cast<long>(nearest_sensor_angle_index(*c.sensor_angle()));
        if (rng.bernoulli(cfg.mutation_rate)) {
            idx += rng.bernoulli(0.5) ? 1 : -1;
            idx = std::clamp(idx, 0L, static_cast<long>(kSensorAngles.size()) - 1);
        }
        genome[velocities] = kSensorAngles[static_cast<std::size_t>(idx)];
    }
    return Controller::from_genome(genome);
}

Controller crossover(const Controller& a, const Controller& b, const EvolutionConfig& cfg, Rng& rng) {
    auto ga = a.genome();
    const auto gb = b.genome();
    if (ga.size() != gb.size()) {
        throw ContractError("crossover between different capability kinds");
    }
    for (std::size_t g = 0; g < ga.size(); ++g) {
        if (rng.bernoulli(cfg.crossover_rate)) {
            ga[g] = gb[g];
        }
    }
    return Controller::from_genome(ga);
}

std::string image_id_for(std::size_t generation, std::size_t index) {
    return "g" + std::to_string(generation) + "-i" + std::to_string(index);
}

std::vector<Controller> evolve_generation(std::span<const Controller> population, Archive& archive,
                                          const BehaviorMapping& mapping, const EvolutionConfig& cfg,
                                          std::size_t generation, Rng& rng) {
    if (population.empty()) {
        throw ContractError("evolve_generation: empty population");
    }
    const auto model = CapabilityModel::for_kind(cfg.kind);
    const auto previous = archive.behaviors();

    std::vector<BehaviorVector> behaviors;
    behaviors.reserve(population.size());
    for (std::size_t i = 0; i < population.size(); ++i) {
        const auto traj =
            rollout(population[i], model, cfg.environment, derive_seed(cfg.seed, generation, i), cfg.horizon);
        behaviors.push_back(mapping.map(traj));
        if (cfg.image_dir) {
            write_pgm(*cfg.image_dir / (image_id_for(generation, i) + ".pgm"), render(traj));
        }
    }

    std::vector<double> scores;
    scores.reserve(population.size());
    for (const auto& b : behaviors) {
        scores.push_back(novelty(b, previous, cfg.novelty_k));
    }
    for (std::size_t i = 0; i < population.size(); ++i) {
        archive.append({generation, population[i], behaviors[i], image_id_for(generation, i)});
    }

    const auto parents = select_parents(scores, std::max<std::size_t>(1, (population.size() + 1) / 2));
    std::vector<Controller> next;
    next.reserve(cfg.population);
    while (next.size() < cfg.population) {
        Controller child;
        for (std::size_t attempt = 0; attempt <= cfg.child_retries; ++attempt) {
            const auto& pa = population[parents[rng.below(parents.size())]];
            const auto& pb = population[parents[rng.below(parents.size())]];
            child = mutate(crossover(pa, pb, cfg, rng), cfg, rng);
            if (!cfg.filter || passes_filter(child, cfg.filter_config)) {
                break;
            }
        }
        next.push_back(std::move(child));
    }
    return next;
}

std::vector<Controller> initial_population(const EvolutionConfig& cfg, Rng& rng) {
    std::vector<Controller> pop;
    pop.reserve(cfg.population);
    while (pop.size() < cfg.population) {
        auto c = sample_discretized(cfg.kind, rng);
        if (!cfg.filter || passes_filter(c, cfg.filter_config)) {
            pop.push_back(std::move(c));
        }
    }
    return pop;
}

Archive run_novelty_search(const EvolutionConfig& cfg, const BehaviorMapping& mapping,
                           const std::optional<std::filesystem::path>& archive_path,
                           const GenerationCallback& on_generation) {
    cfg.validate();
    Archive archive(mapping.id());
    if (archive_path) {
        archive.persist_to(*archive_path);
    }
    Rng rng(derive_seed(cfg.seed, 0xe7017e));
    auto population = initial_population(cfg, rng);
    for (std::size_t g = 0; g < cfg.generations; ++g) {
        population = evolve_generation(population, archive, mapping, cfg, g, rng);
        if (on_generation) {
            on_generation(g, archive);
        }
    }
    return archive;
}

// ---------------------------------------------------------------------------
// k-medoids.

Taxonomy k_medoids(std::span<const BehaviorVector> points, std::size_t k) {
    const std::size_t n = points.size();
    if (k == 0 || n < k) {
        throw ContractError("k_medoids: need 1 <= k <= number of points");
    }
    const auto dist = [&](std::size_t i, std::size_t j) { return euclidean(points[i], points[j]); };
    constexpr double inf = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> medoids;
    std::vector<char> is_medoid(n, 0);
    std::vector<double> nearest(n, inf);

    // Build: start from the point with the smallest total distance, then add
    // the point with the largest cost reduction.
    {
        std::size_t best = 0;
        double best_total = inf;
        for (std::size_t i = 0; i < n; ++i) {
            double total = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                total += dist(i, j);
            }
            if (total < best_total) {
                best_total = total;
                best = i;
            }
        }
        medoids.push_back(best);
        is_medoid[best] = 1;
        for (std::size_t j = 0; j < n; ++j) {
            nearest[j] = dist(j, best);
        }
    }
    while (medoids.size() < k) {
        std::size_t best = n;
        double best_gain = -1.0;
        for (std::size_t c = 0; c < n; ++c) {
            if (is_medoid[c]) {
                continue;
            }
            double gain = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                gain += std::max(nearest[j] - dist(j, c), 0.0);
            }
            if (gain > best_gain) {
                best_gain = gain;
                best = c;
            }
        }
        medoids.push_back(best);
        is_medoid[best] = 1;
        for (std::size_t j = 0; j < n; ++j) {
            nearest[j] = std::min(nearest[j], dist(j, best));
        }
    }

    // Nearest / second-nearest medoid caches.
    std::vector<std::size_t> first_idx(n);
    std::vector<double> first(n);
    std::vector<double> second(n);
    const auto refresh = [&] {
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            first[j] = inf;
            second[j] = inf;
            first_idx[j] = 0;
            for (std::size_t m = 0; m < medoids.size(); ++m) {
                const double d = dist(j, medoids[m]);
                if (d < first[j]) {
                    second[j] = first[j];
                    first[j] = d;
                    first_idx[j] = m;
                } else if (d < second[j]) {
                    second[j] = d;
                }
            }
            total += first[j];
        }
        return total;
    };

    Taxonomy tax;
    double cost = refresh();
    tax.cost_history.push_back(cost);

    // Swap: apply the best improving (medoid, non-medoid) exchange until none improves.
    for (;;) {
        double best_delta = 0.0;
        std::size_t best_m = 0;
        std::size_t best_o = n;
        for (std::size_t m = 0; m < medoids.size(); ++m) {
            for (std::size_t o = 0; o < n; ++o) {
                if (is_medoid[o]) {
                    continue;
                }
                double delta = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double d = dist(j, o);
                    const double keep = first_idx[j] == m ? second[j] : first[j];
                    delta += std::min(keep, d) - first[j];
                }
                if (delta < best_delta) {
                    best_delta = delta;
                    best_m = m;
                    best_o = o;
                }
            }
        }
        const double tolerance = 1e-12 * std::max(1.0, cost);
        if (best_o == n || best_delta >= -tolerance) {
            break;
        }
        const std::size_t previous = medoids[best_m];
        is_medoid[previous] = 0;
        medoids[best_m] = best_o;
        is_medoid[best_o] = 1;
        const double updated = refresh();
        if (!(updated < cost)) {
            // rounding left no real improvement: undo
            is_medoid[best_o] = 0;
            medoids[best_m] = previous;
            is_medoid[previous] = 1;
            refresh();
            break;
        }
        cost = updated;
        tax.cost_history.push_back(cost);
    }

    tax.medoids = medoids;
    tax.cost = cost;
    tax.assignments = first_idx;
    return tax;
}

}  // namespace swarmtax
