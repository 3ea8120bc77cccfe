#pragma once

#include <array>
#include <cstdint>
#include <iterator>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "swarmtax/rng.hpp"

namespace swarmtax {

enum class CapabilityKind { single_sensor, two_sensor };

std::string to_string(CapabilityKind kind);
CapabilityKind capability_from_string(const std::string& name);

/// The ten admissible second-sensor angles, ascending.
inline constexpr std::array<double, 10> kSensorAngles = {
    -2.0 * std::numbers::pi / 3.0, -std::numbers::pi / 2.0, -std::numbers::pi / 3.0,
    -std::numbers::pi / 4.0,       -std::numbers::pi / 6.0, std::numbers::pi / 6.0,
    std::numbers::pi / 4.0,        std::numbers::pi / 3.0,  std::numbers::pi / 2.0,
    2.0 * std::numbers::pi / 3.0,
};

/// Number of grid values per velocity gene: {-1.0, -0.9, ..., 1.0}.
inline constexpr int kGridLevels = 21;

/// Index into kSensorAngles of the closest admissible angle.
std::size_t nearest_sensor_angle_index(double angle);

/// A homogeneous swarm policy: one (v_l, v_r) pair per sensor-reading branch.
///
/// Branch b of a two-sensor controller is selected by the readings
/// (S1, S2) as b = S1 + 2 * S2, so branches are ordered
/// off/off, on/off, off/on, on/on.
class Controller {
  public:
    Controller() = default;

    static Controller single(double vl0, double vr0, double vl1, double vr1);
    static Controller two(const std::array<double, 8>& velocities, double sensor_angle);

    /// 4 values (single-sensor) or 9 values (8 velocities + sensor angle).
    static Controller from_genome(std::span<const double> genome);

    CapabilityKind kind() const noexcept {
        return velocities_.size() == 8 ? CapabilityKind::two_sensor : CapabilityKind::single_sensor;
    }
    int sensor_count() const noexcept { return velocities_.size() == 8 ? 2 : 1; }
    int branch_count() const noexcept { return static_cast<int>(velocities_.size() / 2); }

    std::span<const double> velocities() const noexcept { return velocities_; }
    std::optional<double> sensor_angle() const noexcept { return sensor_angle_; }

    /// (v_l, v_r) executed on the given branch.
    std::pair<double, double> branch(int index) const;

    /// Velocities followed by the sensor angle when present.
    std::vector<double> genome() const;

    /// True when every velocity is a multiple of 0.1 (within 1e-9) and the
    /// angle, if any, is one of kSensorAngles.
    bool on_grid() const;

    /// Velocities in tenths. Only meaningful when on_grid().
    std::vector<int> tenths() const;

    std::string to_string() const;

    friend bool operator==(const Controller&, const Controller&) = default;

  private:
    Controller(std::vector<double> velocities, std::optional<double> angle);

    std::vector<double> velocities_;
    std::optional<double> sensor_angle_;
};

/// Continuous uniform velocities in [-1, 1]; angle uniform over kSensorAngles.
Controller sample_uniform(CapabilityKind kind, Rng& rng);

/// Uniform over the 0.1 grid; angle uniform over kSensorAngles.
Controller sample_discretized(CapabilityKind kind, Rng& rng);

/// Lazy, index-addressable view of the discretized controller space in
/// lexicographic order (first gene most significant, angle index last).
class DiscretizedSpace {
  public:
    explicit DiscretizedSpace(CapabilityKind kind) : kind_{kind} {}

    CapabilityKind kind() const noexcept { return kind_; }

    /// 21^4 for single-sensor, 21^8 * 10 for two-sensor.
    std::uint64_t size() const noexcept;
    Controller at(std::uint64_t index) const;

    class iterator {
      public:
        using iterator_category = std::input_iterator_tag;
        using value_type = Controller;
        using difference_type = std::ptrdiff_t;

        iterator() = default;
        iterator(const DiscretizedSpace* space, std::uint64_t index) : space_{space}, index_{index} {}

        Controller operator*() const { return space_->at(index_); }
        iterator& operator++() {
            ++index_;
            return *this;
        }
        iterator operator++(int) {
            auto copy = *this;
            ++index_;
            return copy;
        }
        bool operator==(const iterator& other) const { return index_ == other.index_; }

      private:
        const DiscretizedSpace* space_ = nullptr;
        std::uint64_t index_ = 0;
    };

    iterator begin() const { return {this, 0}; }
    iterator end() const { return {this, size()}; }

  private:
    CapabilityKind kind_;
};

// ---------------------------------------------------------------------------
// Heuristic pre-filter.

inline constexpr std::size_t kHeuristicCount = 5;

/// Threshold comparison at equality: strict penalizes only m < psi.
enum class Boundary { strict, non_strict };

struct Thresholds {
    std::array<double, kHeuristicCount> psi = {0.4, 0.65, 0.5, 0.2, 0.3};
};

struct FilterConfig {
    Thresholds thresholds{};
    Boundary boundary = Boundary::strict;
    double penalty = -5.0;
    double pass_score = 4.0;
};

struct HeuristicReport {
    std::array<double, kHeuristicCount> metrics{};
    std::vector<int> penalties;  // zero-based indices of failed thresholds
    double score = 0.0;
    bool passes = false;
};

/// m1 max |v|, m2 L2 norm, m3 displacement, m4 distance to the mirrored
/// controller, m5 distance to the neglectful controller.
///
/// For two-sensor controllers m3 sums |v_l + v_r| over all four branches,
/// while m4 and m5 take the minimum over the three sensing branches of the
/// distance to the mirrored / unchanged no-detection pair.
std::array<double, kHeuristicCount> heuristic_metrics(const Controller& c);

/// Grid controllers are decided with integer arithmetic on tenths so the
/// boundary cases do not depend on floating-point rounding.
HeuristicReport heuristic_score(const Controller& c, const FilterConfig& config = {});

inline bool passes_filter(const Controller& c, const FilterConfig& config = {}) {
    return heuristic_score(c, config).passes;
}

}  // namespace swarmtax
