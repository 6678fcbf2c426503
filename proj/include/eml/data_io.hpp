#ifndef EML_DATA_IO_HPP
#define EML_DATA_IO_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "eml/grid.hpp"

namespace eml::io {

struct FixationRecord {
    std::string image_id;
    std::vector<std::pair<int, int>> fixations; // (x, y), 0-indexed pixels
    int width = 0, height = 0;                  // source resolution
};

// Unit impulses blurred with an isotropic Gaussian truncated at 4*sigma,
// then sum-normalized.
DensityMap fixations_to_density(const FixationRecord& rec, double sigma);

// 1 at each fixation pixel; duplicates collapse.
FixationMap fixations_to_binary(const FixationRecord& rec);

struct PadGeometry {
    int left = 0, right = 0, top = 0, bottom = 0;
    bool any() const { return left || right || top || bottom; }
};

// Zero-pads the deficient axis symmetrically (extra pixel on bottom/right
// when odd) so width:height matches ratio_w:ratio_h within one pixel.
std::pair<Grid, PadGeometry> pad_to_ratio(const Grid& image,
                                          int ratio_w = 4, int ratio_h = 3);
// Inverse of pad_to_ratio: recovers the original image bit-exactly.
Grid crop(const Grid& padded, const PadGeometry& pad);

// Bilinear resize; a sum-normalized input is re-normalized to sum 1.
DensityMap resize_map(const DensityMap& map, int target_w, int target_h);

// Grayscale PNG, 8- or 16-bit. Loading maps integers to [0,1]; saving
// rescales [min,max] to the full integer range (lossy).
Grid load_map_image(const std::filesystem::path& path);
void save_map_image(const Grid& map, const std::filesystem::path& path,
                    int bit_depth = 16);

// One "x<TAB>y" pair per line, 0-indexed integer pixels.
std::vector<std::pair<int, int>> load_fixation_file(const std::filesystem::path& path);
void save_fixation_file(const std::vector<std::pair<int, int>>& fixations,
                        const std::filesystem::path& path);

struct ManifestEntry {
    std::string image;     // paths relative to the manifest root
    std::string fixations;
    std::string density;   // may be empty; rebuilt from fixations + sigma
};

struct DatasetManifest {
    std::filesystem::path root;
    double sigma = 0.0;
    std::string split = "train";
    std::vector<ManifestEntry> entries;

    static DatasetManifest load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
};

struct Sample {
    std::string id;
    Grid image;
    DensityMap density;   // sum-normalized
    FixationMap fixations;
};
using Dataset = std::vector<Sample>;

// Loads every entry; rejects mismatched shapes rather than resizing.
Dataset load_dataset(const DatasetManifest& manifest);

struct SynthConfig {
    int count = 10;
    int width = 64, height = 48;
    int blobs_per_image = 3;
    std::uint64_t seed = 0;
    double sigma = 0.0; // 0 -> 19px scaled from 480 rows to the target height
    double blur_sigma() const;
};

// Bright Gaussian blobs on noise; fixations at blob centers; ground truth
// via fixations_to_density. Fully determined by the seed.
Dataset synth_dataset(const SynthConfig& cfg);
DatasetManifest write_synth_dataset(const SynthConfig& cfg,
                                    const std::filesystem::path& dir);

} // namespace eml::io

#endif
