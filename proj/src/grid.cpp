#include "eml/grid.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "eml/simd.hpp"

namespace eml {

Grid::Grid(int width, int height)
    : width_(width), height_(height) {
    if (width < 1 || height < 1)
        throw ShapeMismatch("grid dims must be >= 1, got " + std::to_string(width) +
                            "x" + std::to_string(height));
    values_.assign(std::size_t(width) * height, 0.0);
}

Grid::Grid(int width, int height, std::vector<double> values)
    : width_(width), height_(height), values_(std::move(values)) {
    if (width < 1 || height < 1)
        throw ShapeMismatch("grid dims must be >= 1, got " + std::to_string(width) +
                            "x" + std::to_string(height));
    if (values_.size() != std::size_t(width) * height)
        throw ShapeMismatch("value count " + std::to_string(values_.size()) +
                            " != " + std::to_string(width) + "x" + std::to_string(height));
}

double Grid::sum() const {
    return simd::active_kernels().sum(values_.data(), values_.size());
}

DensityMap::DensityMap(Grid g) : grid_(std::move(g)) {
    for (double v : grid_.values()) {
        if (!(v >= 0.0))
            throw DegenerateInput("density map value " + std::to_string(v) +
                                  " is negative or NaN");
    }
}

DensityMap::DensityMap(int width, int height, std::vector<double> values)
    : DensityMap(Grid(width, height, std::move(values))) {}

FixationMap::FixationMap(int width, int height)
    : width_(width), height_(height) {
    if (width < 1 || height < 1)
        throw ShapeMismatch("fixation map dims must be >= 1");
    values_.assign(std::size_t(width) * height, 0);
}

FixationMap::FixationMap(int width, int height, std::vector<std::uint8_t> values)
    : width_(width), height_(height), values_(std::move(values)) {
    if (width < 1 || height < 1)
        throw ShapeMismatch("fixation map dims must be >= 1");
    if (values_.size() != std::size_t(width) * height)
        throw ShapeMismatch("fixation value count does not match dims");
    for (std::uint8_t v : values_) {
        if (v > 1)
            throw DegenerateInput("fixation map values must be 0 or 1, got " +
                                  std::to_string(int(v)));
    }
}

void FixationMap::set(int x, int y, std::uint8_t v) {
    if (x < 0 || x >= width_ || y < 0 || y >= height_)
        throw OutOfBounds("fixation (" + std::to_string(x) + "," + std::to_string(y) +
                          ") outside " + std::to_string(width_) + "x" + std::to_string(height_));
    if (v > 1) throw DegenerateInput("fixation value must be 0 or 1");
    values_[std::size_t(y) * width_ + x] = v;
}

std::size_t FixationMap::count() const {
    std::size_t n = 0;
    for (std::uint8_t v : values_) n += v;
    return n;
}

DensityMap normalize_sum(const DensityMap& map) {
    const double total = map.sum();
    if (total <= 0.0)
        throw ZeroMass("cannot normalize a map with total mass " + std::to_string(total));
    Grid out = map.grid();
    simd::active_kernels().scale(1.0 / total, out.data(), out.size());
    return DensityMap(std::move(out));
}

GridStats grid_stats(const Grid& g) {
    const auto& k = simd::active_kernels();
    const double n = double(g.size());
    GridStats s;
    s.mean = k.sum(g.data(), g.size()) / n;
    s.stdev = std::sqrt(k.centered_sq_sum(g.data(), s.mean, g.size()) / n);
    return s;
}

GridStats grid_stats(const DensityMap& m) { return grid_stats(m.grid()); }

Grid standardize(const Grid& g) {
    const GridStats s = grid_stats(g);
    if (s.stdev <= 0.0)
        throw DegenerateInput("standardize requires a non-constant map");
    Grid out(g.width(), g.height());
    const double inv = 1.0 / s.stdev;
    for (std::size_t i = 0; i < g.size(); ++i)
        out.values()[i] = (g.values()[i] - s.mean) * inv;
    return out;
}

Grid standardize(const DensityMap& m) { return standardize(m.grid()); }

} // namespace eml
