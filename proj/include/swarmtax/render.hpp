#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "swarmtax/rng.hpp"
#include "swarmtax/sim.hpp"

namespace swarmtax {

inline constexpr int kImageSide = 50;
inline constexpr std::size_t kRenderWindow = 160;

/// Square single-channel image, row-major, intensities in [0, 1].
struct TrajectoryImage {
    int side = kImageSide;
    std::vector<float> pixels = std::vector<float>(static_cast<std::size_t>(kImageSide) * kImageSide, 0.0f);
    std::string source_id;

    TrajectoryImage() = default;
    explicit TrajectoryImage(int side_px, std::string id = {})
        : side{side_px}, pixels(static_cast<std::size_t>(side_px) * side_px, 0.0f), source_id{std::move(id)} {}

    float& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * side + col]; }
    float at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * side + col]; }
};

/// Max-composite of the last `window` frames; each agent is a filled disk.
TrajectoryImage render(const Trajectory& trajectory, std::size_t window = kRenderWindow, int out_size = kImageSide);

/// Explicit augmentation parameters: square crop of `crop_size` pixels at
/// (row0, col0), bilinear resize back to full size, then `quarter_turns`
/// counter-clockwise 90-degree rotations.
struct AugmentParams {
    int crop_size = kImageSide;
    int row0 = 0;
    int col0 = 0;
    int quarter_turns = 0;
};

AugmentParams draw_augment_params(int side, Rng& rng);
TrajectoryImage augment_with(const TrajectoryImage& image, const AugmentParams& params);
TrajectoryImage augment(const TrajectoryImage& image, Rng& rng);

/// Bilinear resize of a square crop to `out_side`, half-pixel centers.
TrajectoryImage resize_bilinear(const TrajectoryImage& image, int row0, int col0, int crop, int out_side);
TrajectoryImage rotate_quarter_turns(const TrajectoryImage& image, int quarter_turns);

/// Binary PGM (P5, maxval 255).
std::vector<unsigned char> encode_pgm(const TrajectoryImage& image);
TrajectoryImage decode_pgm(std::span<const unsigned char> bytes, std::string source_id = {});
void write_pgm(const std::filesystem::path& path, const TrajectoryImage& image);
TrajectoryImage read_pgm(const std::filesystem::path& path);

}  // namespace swarmtax
