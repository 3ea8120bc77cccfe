#include "swarmtax/controller.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "swarmtax/errors.hpp"

namespace swarmtax {

namespace {

constexpr double kGridTolerance = 1e-9;

std::optional<long long> exact_scaled(double value, double scale) {
    const double scaled = value * scale;
    const double rounded = std::round(scaled);
    if (std::abs(scaled - rounded) > kGridTolerance) {
        return std::nullopt;
    }
    return static_cast<long long>(rounded);
}

bool is_perfect_square(long long n, long long& root) {
    root = static_cast<long long>(std::llround(std::sqrt(static_cast<double>(n))));
    while (root * root > n) {
        --root;
    }
    while ((root + 1) * (root + 1) <= n) {
        ++root;
    }
    return root * root == n;
}

void check_velocity(double v) {
    if (!std::isfinite(v) || v < -1.0 || v > 1.0) {
        throw ContractError("controller velocity outside [-1, 1]: " + std::to_string(v));
    }
}

}  // namespace

std::string to_string(CapabilityKind kind) {
    return kind == CapabilityKind::single_sensor ? "single" : "two";
}

CapabilityKind capability_from_string(const std::string& name) {
    if (name == "single" || name == "single-sensor" || name == "1") {
        return CapabilityKind::single_sensor;
    }
    if (name == "two" || name == "two-sensor" || name == "2") {
        return CapabilityKind::two_sensor;
    }
    throw ContractError("unknown capability kind: " + name);
}

std::size_t nearest_sensor_angle_index(double angle) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < kSensorAngles.size(); ++i) {
        if (std::abs(kSensorAngles[i] - angle) < std::abs(kSensorAngles[best] - angle)) {
            best = i;
        }
    }
    return best;
}

Controller::Controller(std::vector<double> velocities, std::optional<double> angle)
    : velocities_{std::move(velocities)}, sensor_angle_{angle} {
    for (double v : velocities_) {
        check_velocity(v);
    }
    if (sensor_angle_) {
        const double limit = 2.0 * std::numbers::pi / 3.0 + kGridTolerance;
        if (!std::isfinite(*sensor_angle_) || std::abs(*sensor_angle_) > limit) {
            throw ContractError("sensor angle outside [-2pi/3, 2pi/3]");
        }
    }
}

Controller Controller::single(double vl0, double vr0, double vl1, double vr1) {
    return Controller({vl0, vr0, vl1, vr1}, std::nullopt);
}

Controller Controller::two(const std::array<double, 8>& velocities, double sensor_angle) {
    return Controller(std::vector<double>(velocities.begin(), velocities.end()), sensor_angle);
}

Controller Controller::from_genome(std::span<const double> genome) {
    if (genome.size() == 4) {
        return Controller(std::vector<double>(genome.begin(), genome.end()), std::nullopt);
    }
    if (genome.size() == 9) {
        return Controller(std::vector<double>(genome.begin(), genome.begin() + 8), genome[8]);
    }
    throw ContractError("controller genome must have 4 or 9 values, got " + std::to_string(genome.size()));
}

std::pair<double, double> Controller::branch(int index) const {
    if (index < 0 || index >= branch_count()) {
        throw ContractError("controller branch out of range");
    }
    return {velocities_[2 * index], velocities_[2 * index + 1]};
}

std::vector<double> Controller::genome() const {
    std::vector<double> out = velocities_;
    if (sensor_angle_) {
        out.push_back(*sensor_angle_);
    }
    return out;
}

bool Controller::on_grid() const {
    for (double v : velocities_) {
        if (!exact_scaled(v, 10.0)) {
            return false;
        }
    }
    if (sensor_angle_) {
        const auto idx = nearest_sensor_angle_index(*sensor_angle_);
        if (std::abs(kSensorAngles[idx] - *sensor_angle_) > kGridTolerance) {
            return false;
        }
    }
    return true;
}

std::vector<int> Controller::tenths() const {
    std::vector<int> out;
    out.reserve(velocities_.size());
    for (double v : velocities_) {
        out.push_back(static_cast<int>(std::lround(v * 10.0)));
    }
    return out;
}

std::string Controller::to_string() const {
    std::ostringstream os;
    os << '[';
    const auto g = genome();
    for (std::size_t i = 0; i < g.size(); ++i) {
        os << (i ? ", " : "") << g[i];
    }
    os << ']';
    return os.str();
}

Controller sample_uniform(CapabilityKind kind, Rng& rng) {
    const std::size_t n = kind == CapabilityKind::single_sensor ? 4 : 8;
    std::vector<double> v(n);
    for (auto& x : v) {
        x = rng.uniform(-1.0, 1.0);
    }
    if (kind == CapabilityKind::single_sensor) {
        return Controller::from_genome(v);
    }
    v.push_back(kSensorAngles[rng.below(kSensorAngles.size())]);
    return Controller::from_genome(v);
}

Controller sample_discretized(CapabilityKind kind, Rng& rng) {
    const std::size_t n = kind == CapabilityKind::single_sensor ? 4 : 8;
    std::vector<double> v(n);
    for (auto& x : v) {
        x = static_cast<double>(static_cast<int>(rng.below(kGridLevels)) - 10) / 10.0;
    }
    if (kind == CapabilityKind::two_sensor) {
        v.push_back(kSensorAngles[rng.below(kSensorAngles.size())]);
    }
    return Controller::from_genome(v);
}

std::uint64_t DiscretizedSpace::size() const noexcept {
    const std::uint64_t four = 21ULL * 21ULL * 21ULL * 21ULL;
    return kind_ == CapabilityKind::single_sensor ? four : four * four * kSensorAngles.size();
}

Controller DiscretizedSpace::at(std::uint64_t index) const {
    if (index >= size()) {
        throw ContractError("discretized controller index out of range");
    }
    const std::size_t genes = kind_ == CapabilityKind::single_sensor ? 4 : 8;
    std::vector<double> v(genes + (kind_ == CapabilityKind::two_sensor ? 1 : 0));
    std::uint64_t rest = index;
    if (kind_ == CapabilityKind::two_sensor) {
        v[genes] = kSensorAngles[rest % kSensorAngles.size()];
        rest /= kSensorAngles.size();
    }
    for (std::size_t g = genes; g-- > 0;) {
        v[g] = static_cast<double>(static_cast<int>(rest % kGridLevels) - 10) / 10.0;
        rest /= kGridLevels;
    }
    return Controller::from_genome(v);
}

// ---------------------------------------------------------------------------

std::array<double, kHeuristicCount> heuristic_metrics(const Controller& c) {
    const auto v = c.velocities();
    std::array<double, kHeuristicCount> m{};
    double max_abs = 0.0;
    double sq = 0.0;
    for (double x : v) {
        max_abs = std::max(max_abs, std::abs(x));
        sq += x * x;
    }
    m[0] = max_abs;
    m[1] = std::sqrt(sq);

    double displacement = 0.0;
    for (int b = 0; b < c.branch_count(); ++b) {
        const auto [l, r] = c.branch(b);
        displacement += std::abs(l + r);
    }
    m[2] = displacement;

    const auto [l0, r0] = c.branch(0);
    double mirror = std::numeric_limits<double>::infinity();
    double neglect = std::numeric_limits<double>::infinity();
    for (int b = 1; b < c.branch_count(); ++b) {
        const auto [l, r] = c.branch(b);
        mirror = std::min(mirror, std::hypot(l + l0, r + r0));
        neglect = std::min(neglect, std::hypot(l - l0, r - r0));
    }
    m[3] = mirror;
    m[4] = neglect;
    return m;
}

namespace {

/// Integer-exact evaluation for grid controllers and thresholds given in
/// hundredths. Returns nullopt when the inputs are not representable.
std::optional<HeuristicReport> exact_score(const Controller& c, const FilterConfig& config) {
    if (!c.on_grid()) {
        return std::nullopt;
    }
    std::array<long long, kHeuristicCount> psi{};  // hundredths
    for (std::size_t i = 0; i < kHeuristicCount; ++i) {
        const auto h = exact_scaled(config.thresholds.psi[i], 100.0);
        if (!h) {
            return std::nullopt;
        }
        psi[i] = *h;
    }
    const auto pass_tenths = exact_scaled(config.pass_score, 10.0);
    const auto penalty_tenths = exact_scaled(config.penalty, 10.0);
    if (!pass_tenths || !penalty_tenths) {
        return std::nullopt;
    }

    const auto t = c.tenths();
    const int branches = c.branch_count();
    long long max_abs = 0;  // tenths
    long long norm_sq = 0;  // hundredths
    for (int x : t) {
        max_abs = std::max<long long>(max_abs, std::abs(x));
        norm_sq += static_cast<long long>(x) * x;
    }
    long long displacement = 0;  // tenths
    for (int b = 0; b < branches; ++b) {
        displacement += std::abs(t[2 * b] + t[2 * b + 1]);
    }
    long long mirror_sq = std::numeric_limits<long long>::max();  // hundredths
    long long neglect_sq = std::numeric_limits<long long>::max();
    for (int b = 1; b < branches; ++b) {
        const long long dl = t[2 * b] + t[0];
        const long long dr = t[2 * b + 1] + t[1];
        mirror_sq = std::min(mirror_sq, dl * dl + dr * dr);
        const long long nl = t[2 * b] - t[0];
        const long long nr = t[2 * b + 1] - t[1];
        neglect_sq = std::min(neglect_sq, nl * nl + nr * nr);
    }
    const long long displacement_scale = branches == 2 ? 1 : 2;

    // Compare value vs threshold, both expressed on a common integer scale.
    const auto below = [&](long long value, long long threshold) {
        return config.boundary == Boundary::strict ? value < threshold : value <= threshold;
    };
    const std::array<bool, kHeuristicCount> penalized = {
        below(max_abs * 10, psi[0]),
        below(norm_sq * 100, psi[1] * psi[1]),
        below(displacement * 10, displacement_scale * psi[2]),
        below(mirror_sq * 100, psi[3] * psi[3]),
        below(neglect_sq * 100, psi[4] * psi[4]),
    };

    HeuristicReport report;
    report.metrics = {
        static_cast<double>(max_abs) / 10.0, std::sqrt(static_cast<double>(norm_sq)) / 10.0,
        static_cast<double>(displacement) / 10.0, std::sqrt(static_cast<double>(mirror_sq)) / 10.0,
        std::sqrt(static_cast<double>(neglect_sq)) / 10.0,
    };

    // Score in tenths: rational part exactly, square-root parts exactly when
    // they are perfect squares. A sum of positive square roots of non-squares
    // is irrational, so it can never tie with the rational pass score.
    long long rational_tenths = 0;
    double irrational_tenths = 0.0;
    bool exact = true;
    const std::array<long long, kHeuristicCount> linear = {max_abs, -1, displacement, -1, -1};
    const std::array<long long, kHeuristicCount> squares = {-1, norm_sq, -1, mirror_sq, neglect_sq};
    for (std::size_t i = 0; i < kHeuristicCount; ++i) {
        if (penalized[i]) {
            report.penalties.push_back(static_cast<int>(i));
            rational_tenths += *penalty_tenths;
        } else if (linear[i] >= 0) {
            rational_tenths += linear[i];
        } else {
            long long root = 0;
            if (is_perfect_square(squares[i], root)) {
                rational_tenths += root;
            } else {
                irrational_tenths += std::sqrt(static_cast<double>(squares[i]));
                exact = false;
            }
        }
    }
    report.score = (static_cast<double>(rational_tenths) + irrational_tenths) / 10.0;
    if (exact) {
        report.passes = rational_tenths >= *pass_tenths;
    } else {
        report.passes = static_cast<double>(rational_tenths) + irrational_tenths >= static_cast<double>(*pass_tenths);
    }
    return report;
}

}  // namespace

HeuristicReport heuristic_score(const Controller& c, const FilterConfig& config) {
    if (auto exact = exact_score(c, config)) {
        return *exact;
    }
    HeuristicReport report;
    report.metrics = heuristic_metrics(c);
    std::array<double, kHeuristicCount> psi = config.thresholds.psi;
    if (c.branch_count() == 4) {
        psi[2] *= 2.0;
    }
    for (std::size_t i = 0; i < kHeuristicCount; ++i) {
        const double m = report.metrics[i];
        const bool penalized = config.boundary == Boundary::strict ? m < psi[i] : m <= psi[i];
        if (penalized) {
            report.penalties.push_back(static_cast<int>(i));
            report.score += config.penalty;
        } else {
            report.score += m;
        }
    }
    report.passes = report.score >= config.pass_score;
    return report;
}

}  // namespace swarmtax
