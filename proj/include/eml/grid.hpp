#ifndef EML_GRID_HPP
#define EML_GRID_HPP

#include <cstdint>
#include <cstddef>
#include <vector>

#include "eml/errors.hpp"

namespace eml {

// Dense 2-D grid of doubles, row-major, origin at top-left. The shared
// carrier for saliency maps, standardized grids and gradients.
class Grid {
public:
    Grid() = default;
    Grid(int width, int height);
    Grid(int width, int height, std::vector<double> values);

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return values_.size(); }

    double at(int x, int y) const { return values_[std::size_t(y) * width_ + x]; }
    double& at(int x, int y) { return values_[std::size_t(y) * width_ + x]; }

    const double* data() const { return values_.data(); }
    double* data() { return values_.data(); }

    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }

    bool same_shape(const Grid& o) const {
        return width_ == o.width_ && height_ == o.height_;
    }

    double sum() const;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> values_;
};

// Nonnegative grid of saliency mass. Construction validates the sign
// invariant; values need not sum to one (see normalize_sum).
class DensityMap {
public:
    DensityMap() = default;
    explicit DensityMap(Grid g);
    DensityMap(int width, int height, std::vector<double> values);

    const Grid& grid() const { return grid_; }
    int width() const { return grid_.width(); }
    int height() const { return grid_.height(); }
    std::size_t size() const { return grid_.size(); }
    double at(int x, int y) const { return grid_.at(x, y); }
    const double* data() const { return grid_.data(); }
    const std::vector<double>& values() const { return grid_.values(); }
    double sum() const { return grid_.sum(); }
    bool same_shape(const DensityMap& o) const { return grid_.same_shape(o.grid_); }

private:
    Grid grid_;
};

// Binary grid of fixation locations.
class FixationMap {
public:
    FixationMap() = default;
    FixationMap(int width, int height);
    FixationMap(int width, int height, std::vector<std::uint8_t> values);

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return values_.size(); }

    std::uint8_t at(int x, int y) const { return values_[std::size_t(y) * width_ + x]; }
    void set(int x, int y, std::uint8_t v);

    const std::vector<std::uint8_t>& values() const { return values_; }

    // N, the number of fixated pixels. May be zero; operations that
    // need N > 0 reject such maps themselves.
    std::size_t count() const;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> values_;
};

struct GridStats {
    double mean = 0.0;
    double stdev = 0.0; // population convention (divide by pixel count)
};

// Scales values so they sum to one. Throws ZeroMass on an all-zero map.
DensityMap normalize_sum(const DensityMap& map);

// Population mean and standard deviation.
GridStats grid_stats(const Grid& g);
GridStats grid_stats(const DensityMap& m);

// (v - mean) / stdev per pixel. Throws DegenerateInput on constant maps.
Grid standardize(const Grid& g);
Grid standardize(const DensityMap& m);

} // namespace eml

#endif
