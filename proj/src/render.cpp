#include "swarmtax/render.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "swarmtax/errors.hpp"

namespace swarmtax {

namespace {

constexpr double kMinDiskRadiusPx = 0.5;

void stamp_disk(TrajectoryImage& img, double cx, double cy, double radius) {
    const int side = img.side;
    const int r0 = std::max(0, static_cast<int>(std::floor(cy - radius - 1.0)));
    const int r1 = std::min(side - 1, static_cast<int>(std::ceil(cy + radius + 1.0)));
    const int c0 = std::max(0, static_cast<int>(std::floor(cx - radius - 1.0)));
    const int c1 = std::min(side - 1, static_cast<int>(std::ceil(cx + radius + 1.0)));
    const double rsq = radius * radius;
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
            const double dx = c + 0.5 - cx;
            const double dy = r + 0.5 - cy;
            if (dx * dx + dy * dy <= rsq) {
                img.at(r, c) = 1.0f;
            }
        }
    }
    // The pixel containing the center is always lit, so small bodies never vanish.
    const int pr = std::clamp(static_cast<int>(std::floor(cy)), 0, side - 1);
    const int pc = std::clamp(static_cast<int>(std::floor(cx)), 0, side - 1);
    img.at(pr, pc) = 1.0f;
}

}  // namespace

TrajectoryImage render(const Trajectory& trajectory, std::size_t window, int out_size) {
    if (out_size <= 0) {
        throw ContractError("render: output size must be positive");
    }
    if (window == 0 || trajectory.frames.size() < window) {
        throw ContractError("render: trajectory shorter than the render window");
    }
    TrajectoryImage img(out_size);
    const auto& frames = trajectory.frames;
    for (std::size_t f = frames.size() - window; f < frames.size(); ++f) {
        const auto& frame = frames[f];
        const double sx = out_size / frame.width;
        const double sy = out_size / frame.height;
        const double radius = std::max(trajectory.agent_radius * sx, kMinDiskRadiusPx);
        for (const auto& a : frame.agents) {
            stamp_disk(img, a.x * sx, a.y * sy, radius);
        }
    }
    return img;
}

AugmentParams draw_augment_params(int side, Rng& rng) {
    AugmentParams p;
    const double scale = rng.uniform(0.6, 1.0);
    p.crop_size = std::clamp(static_cast<int>(std::lround(scale * side)), 1, side);
    const auto slack = static_cast<std::uint64_t>(side - p.crop_size + 1);
    p.row0 = static_cast<int>(rng.below(slack));
    p.col0 = static_cast<int>(rng.below(slack));
    p.quarter_turns = 1 + static_cast<int>(rng.below(3));
    return p;
}

TrajectoryImage resize_bilinear(const TrajectoryImage& image, int row0, int col0, int crop, int out_side) {
    if (crop <= 0 || row0 < 0 || col0 < 0 || row0 + crop > image.side || col0 + crop > image.side) {
        throw ContractError("resize_bilinear: crop outside image");
    }
    TrajectoryImage out(out_side, image.source_id);
    const double ratio = static_cast<double>(crop) / out_side;
    const auto sample_axis = [&](int i, int origin, int& lo, int& hi, double& frac) {
        double s = (i + 0.5) * ratio - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(crop - 1));
        lo = static_cast<int>(std::floor(s));
        hi = std::min(lo + 1, crop - 1);
        frac = s - lo;
        lo += origin;
        hi += origin;
    };
    for (int r = 0; r < out_side; ++r) {
        int ra = 0, rb = 0;
        double fr = 0.0;
        sample_axis(r, row0, ra, rb, fr);
        for (int c = 0; c < out_side; ++c) {
            int ca = 0, cb = 0;
            double fc = 0.0;
            sample_axis(c, col0, ca, cb, fc);
            const double top = image.at(ra, ca) * (1.0 - fc) + image.at(ra, cb) * fc;
            const double bottom = image.at(rb, ca) * (1.0 - fc) + image.at(rb, cb) * fc;
            const double v = top * (1.0 - fr) + bottom * fr;
            out.at(r, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return out;
}

TrajectoryImage rotate_quarter_turns(const TrajectoryImage& image, int quarter_turns) {
    const int q = ((quarter_turns % 4) + 4) % 4;
    const int n = image.side;
    TrajectoryImage out(n, image.source_id);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            int sr = r;
            int sc = c;
            switch (q) {
                case 1:  // counter-clockwise
                    sr = c;
                    sc = n - 1 - r;
                    break;
                case 2:
                    sr = n - 1 - r;
                    sc = n - 1 - c;
                    break;
                case 3:
                    sr = n - 1 - c;
                    sc = r;
                    break;
                default:
                    break;
            }
            out.at(r, c) = image.at(sr, sc);
        }
    }
    return out;
}

TrajectoryImage augment_with(const TrajectoryImage& image, const AugmentParams& params) {
    auto cropped = resize_bilinear(image, params.row0, params.col0, params.crop_size, image.side);
    return rotate_quarter_turns(cropped, params.quarter_turns);
}

TrajectoryImage augment(const TrajectoryImage& image, Rng& rng) {
    return augment_with(image, draw_augment_params(image.side, rng));
}

std::vector<unsigned char> encode_pgm(const TrajectoryImage& image) {
    const std::string header = "P5\n" + std::to_string(image.side) + " " + std::to_string(image.side) + "\n255\n";
    std::vector<unsigned char> out(header.begin(), header.end());
    out.reserve(header.size() + image.pixels.size());
    for (float v : image.pixels) {
        out.push_back(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
    }
    return out;
}

TrajectoryImage decode_pgm(std::span<const unsigned char> bytes, std::string source_id) {
    std::size_t pos = 0;
    const auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') {
                    ++pos;
                }
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    const auto read_int = [&] {
        skip_space();
        long value = 0;
        bool any = false;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            value = value * 10 + (bytes[pos] - '0');
            ++pos;
            any = true;
        }
        if (!any) {
            throw IoError("malformed PGM header");
        }
        return value;
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
        throw IoError("not a binary PGM (P5)");
    }
    pos = 2;
    const long width = read_int();
    const long height = read_int();
    const long maxval = read_int();
    if (width != height || width <= 0 || maxval != 255) {
        throw IoError("unsupported PGM: expected square image with maxval 255");
    }
    ++pos;  // single whitespace after maxval
    const auto count = static_cast<std::size_t>(width * height);
    if (bytes.size() < pos + count) {
        throw IoError("truncated PGM data");
    }
    TrajectoryImage img(static_cast<int>(width), std::move(source_id));
    for (std::size_t i = 0; i < count; ++i) {
        img.pixels[i] = static_cast<float>(bytes[pos + i]) / 255.0f;
    }
    return img;
}

void write_pgm(const std::filesystem::path& path, const TrajectoryImage& image) {
    const auto bytes = encode_pgm(image);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

TrajectoryImage read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_pgm(bytes, path.stem().string());
}

}  // namespace swarmtax
