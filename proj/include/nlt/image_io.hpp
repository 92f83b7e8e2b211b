#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nlt/tensor.hpp"

namespace nlt {

static_assert(std::endian::native == std::endian::little, "raw dumps are little-endian float32");

inline void write_raw_floats(const std::filesystem::path& path, const std::vector<float>& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

inline std::vector<float> read_raw_floats(const std::filesystem::path& path, std::size_t expected_count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::vector<float> data(expected_count);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(expected_count * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != expected_count * sizeof(float))
        throw std::runtime_error("'" + path.string() + "': expected " + std::to_string(expected_count * sizeof(float)) +
                                 " bytes, found " + std::to_string(in.gcount()));
    return data;
}

inline void write_points_text(const std::filesystem::path& path,
                              const std::vector<std::pair<float, float>>& points) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    char buf[64];
    for (const auto& [r, c] : points) {
        std::snprintf(buf, sizeof(buf), "%.9g %.9g\n", r, c);
        out << buf;
    }
}

inline std::vector<std::pair<float, float>> read_points_text(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::vector<std::pair<float, float>> points;
    float r, c;
    while (in >> r >> c) points.emplace_back(r, c);
    return points;
}

/// Plain 8-bit PGM, values scaled linearly from [0, max(data)].
inline void write_pgm(const std::filesystem::path& path, const std::vector<float>& data, int height, int width) {
    if (static_cast<std::size_t>(height) * width != data.size())
        throw std::invalid_argument("write_pgm: size mismatch");
    float max_v = 0.0f;
    for (float v : data) max_v = std::max(max_v, v);
    const float scale = max_v > 0.0f ? 255.0f / max_v : 0.0f;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << "P5\n" << width << " " << height << "\n255\n";
    for (float v : data)
        out.put(static_cast<char>(static_cast<unsigned char>(std::clamp(v * scale, 0.0f, 255.0f))));
}

}  // namespace nlt
