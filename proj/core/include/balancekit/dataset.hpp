#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace balancekit {

/// Row-major samples. Classification sets fill `labels` (0..num_classes-1);
/// regression sets fill `targets` (one vector per row).
struct Dataset {
    std::string name;
    std::vector<std::vector<double>> inputs;
    std::vector<int> labels;
    std::vector<std::vector<double>> targets;

    std::size_t size() const noexcept { return inputs.size(); }
    std::size_t feature_count() const noexcept { return inputs.empty() ? 0 : inputs.front().size(); }
    bool labelled() const noexcept { return !labels.empty(); }
    int num_classes() const;

    /// Throws InvalidArgument on ragged rows or mismatched label/target counts.
    void check() const;

    Dataset subset(const std::vector<std::size_t>& rows) const;
};

/// Two rings centred at the origin: label 0 at radius 1, label 1 at radius
/// 0.5, each point's radius perturbed by noise * N(0, 1). Angles are uniform.
/// Classes differ in size by at most one; rows are shuffled.
Dataset make_concentric_circles(std::size_t n, double noise, std::uint64_t seed);

/// Per-class sample of about fraction * n_c rows (largest-remainder
/// rounding), selected uniformly within each class by `seed`. Original row
/// order is kept. Throws InvalidArgument if a class would get no rows.
Dataset stratified_subsample(const Dataset& data, double fraction, std::uint64_t seed);

/// Reads an IDX file (big-endian magic 0x0000 <type> <ndim>, then ndim
/// 32-bit dimensions, then data). Unsigned-byte data is scaled to [0, 1].
/// A 1-dimensional file becomes labels; higher ranks become one row per
/// leading index. With `labels_path`, labels are attached to the images.
/// Malformed input raises ParseError with the byte offset.
Dataset load_idx(const std::filesystem::path& path,
                 const std::optional<std::filesystem::path>& labels_path = std::nullopt);

struct CsvSchema {
    std::string label_column = "label";
    bool has_header = true;
    /// Column index used when there is no header.
    std::size_t label_index = 0;
};

/// One sample per row; every non-label column is a feature. Malformed rows
/// raise ParseError with the 1-based line number as position.
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});

/// Writes a header (label, x0, x1, ...) and one row per sample with full
/// double precision.
void save_csv(const Dataset& data, const std::filesystem::path& path);

}  // namespace balancekit
