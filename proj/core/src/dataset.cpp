#include "balancekit/dataset.hpp"

#include "balancekit/error.hpp"
#include "balancekit/random.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace balancekit {

int Dataset::num_classes() const {
    if (labels.empty()) return 0;
    return *std::max_element(labels.begin(), labels.end()) + 1;
}

void Dataset::check() const {
    const std::size_t width = feature_count();
    for (std::size_t r = 0; r < inputs.size(); ++r) {
        if (inputs[r].size() != width) {
            throw InvalidArgument(fmt::format("dataset '{}': row {} has {} features, expected {}",
                                              name, r, inputs[r].size(), width));
        }
    }
    if (!labels.empty() && labels.size() != inputs.size()) {
        throw InvalidArgument(fmt::format("dataset '{}': {} labels for {} rows", name,
                                          labels.size(), inputs.size()));
    }
    if (!targets.empty() && targets.size() != inputs.size()) {
        throw InvalidArgument(fmt::format("dataset '{}': {} targets for {} rows", name,
                                          targets.size(), inputs.size()));
    }
    for (int label : labels) {
        if (label < 0) throw InvalidArgument(fmt::format("dataset '{}': negative label", name));
    }
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
    Dataset out;
    out.name = name;
    for (std::size_t r : rows) {
        out.inputs.push_back(inputs.at(r));
        if (!labels.empty()) out.labels.push_back(labels[r]);
        if (!targets.empty()) out.targets.push_back(targets[r]);
    }
    return out;
}

Dataset make_concentric_circles(std::size_t n, double noise, std::uint64_t seed) {
    if (n < 2) throw InvalidArgument("circles dataset needs n >= 2");
    if (!(noise >= 0.0)) throw InvalidArgument("noise must be >= 0");
    Rng rng(seed);
    const std::size_t n_outer = n / 2;
    Dataset out;
    out.name = "circles";
    for (std::size_t k = 0; k < n; ++k) {
        const bool outer = k < n_outer;
        const double radius = (outer ? 1.0 : 0.5) + (noise > 0.0 ? noise * rng.normal() : 0.0);
        const double angle = 2.0 * std::numbers::pi * rng.uniform01();
        out.inputs.push_back({radius * std::cos(angle), radius * std::sin(angle)});
        out.labels.push_back(outer ? 0 : 1);
    }
    std::vector<std::size_t> order(n);
    for (std::size_t k = 0; k < n; ++k) order[k] = k;
    for (std::size_t k = n - 1; k > 0; --k) std::swap(order[k], order[rng.below(k + 1)]);
    return out.subset(order);
}

Dataset stratified_subsample(const Dataset& data, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw InvalidArgument(fmt::format("fraction must be in (0, 1], got {}", fraction));
    }
    if (!data.labelled()) throw InvalidArgument("stratified sampling needs labels");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t r = 0; r < data.size(); ++r) by_class[data.labels[r]].push_back(r);

    // Largest-remainder apportionment of round(fraction * N) rows.
    const auto total = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(data.size())));
    std::vector<std::pair<int, double>> remainders;
    std::map<int, std::size_t> quota;
    std::size_t assigned = 0;
    for (const auto& [label, rows] : by_class) {
        const double exact = fraction * static_cast<double>(rows.size());
        quota[label] = static_cast<std::size_t>(std::floor(exact));
        assigned += quota[label];
        remainders.emplace_back(label, exact - std::floor(exact));
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (std::size_t k = 0; assigned < total && k < remainders.size(); ++k, ++assigned) {
        ++quota[remainders[k].first];
    }

    Rng rng(seed);
    std::vector<std::size_t> chosen;
    for (auto& [label, rows] : by_class) {
        const std::size_t q = std::min(quota[label], rows.size());
        if (q == 0) {
            throw InvalidArgument(
                fmt::format("fraction {} leaves class {} with no samples", fraction, label));
        }
        for (std::size_t k = 0; k < q; ++k) {
            std::swap(rows[k], rows[k + rng.below(rows.size() - k)]);
        }
        chosen.insert(chosen.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(q));
    }
    std::sort(chosen.begin(), chosen.end());
    return data.subset(chosen);
}

namespace {

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(fmt::format("cannot open '{}'", path.string()));
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at) {
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
           (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

struct IdxTensor {
    std::vector<std::uint32_t> dims;
    std::vector<double> values;
    bool unsigned_bytes = false;
};

IdxTensor parse_idx(const std::vector<unsigned char>& b, const std::string& name) {
    if (b.size() < 4) throw ParseError(fmt::format("{}: truncated IDX header", name), b.size());
    if (b[0] != 0 || b[1] != 0) throw ParseError(fmt::format("{}: bad IDX magic", name), 0);
    const unsigned char type = b[2];
    const std::size_t ndim = b[3];
    if (ndim == 0) throw ParseError(fmt::format("{}: IDX file has no dimensions", name), 3);
    std::size_t width = 0;
    switch (type) {
        case 0x08:
        case 0x09:
            width = 1;
            break;
        case 0x0B:
            width = 2;
            break;
        case 0x0C:
        case 0x0D:
            width = 4;
            break;
        case 0x0E:
            width = 8;
            break;
        default:
            throw ParseError(fmt::format("{}: unknown IDX type 0x{:02x}", name, type), 2);
    }
    const std::size_t header = 4 + 4 * ndim;
    if (b.size() < header) throw ParseError(fmt::format("{}: truncated IDX dimensions", name), b.size());
    IdxTensor t;
    t.unsigned_bytes = type == 0x08;
    std::size_t count = 1;
    for (std::size_t d = 0; d < ndim; ++d) {
        t.dims.push_back(be32(b, 4 + 4 * d));
        count *= t.dims.back();
    }
    if (b.size() != header + count * width) {
        throw ParseError(fmt::format("{}: expected {} data bytes, found {}", name, count * width,
                                     b.size() - header),
                         std::min(b.size(), header + count * width));
    }
    t.values.resize(count);
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t at = header + k * width;
        switch (type) {
            case 0x08:
                t.values[k] = b[at] / 255.0;
                break;
            case 0x09:
                t.values[k] = static_cast<signed char>(b[at]);
                break;
            case 0x0B:
                t.values[k] = static_cast<std::int16_t>((b[at] << 8) | b[at + 1]);
                break;
            case 0x0C:
                t.values[k] = static_cast<std::int32_t>(be32(b, at));
                break;
            case 0x0D:
                t.values[k] = std::bit_cast<float>(be32(b, at));
                break;
            case 0x0E: {
                const std::uint64_t v = (std::uint64_t{be32(b, at)} << 32) | be32(b, at + 4);
                t.values[k] = std::bit_cast<double>(v);
                break;
            }
        }
    }
    return t;
}

std::vector<int> as_labels(const IdxTensor& t, const std::string& name) {
    if (t.dims.size() != 1) throw ParseError(fmt::format("{}: labels must be 1-dimensional", name), 3);
    std::vector<int> labels;
    for (double v : t.values) {
        // Byte labels were scaled on read; undo it.
        labels.push_back(static_cast<int>(std::lround(t.unsigned_bytes ? v * 255.0 : v)));
    }
    return labels;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& path,
                 const std::optional<std::filesystem::path>& labels_path) {
    const std::string name = path.filename().string();
    const IdxTensor t = parse_idx(read_bytes(path), name);
    Dataset out;
    out.name = name;
    if (t.dims.size() == 1) {
        out.labels = as_labels(t, name);
        out.inputs.assign(out.labels.size(), {});
    } else {
        const std::size_t rows = t.dims[0];
        const std::size_t width = rows == 0 ? 0 : t.values.size() / rows;
        for (std::size_t r = 0; r < rows; ++r) {
            out.inputs.emplace_back(t.values.begin() + static_cast<std::ptrdiff_t>(r * width),
                                    t.values.begin() + static_cast<std::ptrdiff_t>((r + 1) * width));
        }
    }
    if (labels_path) {
        const std::string lname = labels_path->filename().string();
        out.labels = as_labels(parse_idx(read_bytes(*labels_path), lname), lname);
        if (out.labels.size() != out.inputs.size()) {
            throw ParseError(fmt::format("{}: {} labels for {} images", lname, out.labels.size(),
                                         out.inputs.size()),
                             8);
        }
    }
    return out;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

bool to_double(const std::string& s, double& v) {
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw Error(fmt::format("cannot open '{}'", path.string()));
    Dataset out;
    out.name = path.filename().string();
    std::string line;
    std::size_t line_no = 0;
    std::size_t label_col = schema.label_index;
    std::size_t columns = 0;
    if (schema.has_header) {
        if (!std::getline(in, line)) throw ParseError("CSV file is empty", 1);
        ++line_no;
        const auto header = split_csv(line);
        const auto it = std::find(header.begin(), header.end(), schema.label_column);
        if (it == header.end()) {
            throw ParseError(fmt::format("CSV header has no column '{}'", schema.label_column), 1);
        }
        label_col = static_cast<std::size_t>(it - header.begin());
        columns = header.size();
    }
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv(line);
        if (columns == 0) columns = cells.size();
        if (cells.size() != columns) {
            throw ParseError(fmt::format("CSV line {}: {} columns, expected {}", line_no,
                                         cells.size(), columns),
                             line_no);
        }
        if (label_col >= cells.size()) {
            throw ParseError(fmt::format("CSV line {}: no label column {}", line_no, label_col), line_no);
        }
        std::vector<double> row;
        int label = 0;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            double v = 0.0;
            if (!to_double(cells[c], v)) {
                throw ParseError(fmt::format("CSV line {}: cell {} ('{}') is not a number", line_no,
                                             c + 1, cells[c]),
                                 line_no);
            }
            if (c == label_col) {
                if (v != std::floor(v) || v < 0) {
                    throw ParseError(fmt::format("CSV line {}: label '{}' is not a class index",
                                                 line_no, cells[c]),
                                     line_no);
                }
                label = static_cast<int>(v);
            } else {
                row.push_back(v);
            }
        }
        out.inputs.push_back(std::move(row));
        out.labels.push_back(label);
    }
    return out;
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
    data.check();
    if (!data.labelled()) throw InvalidArgument("save_csv writes labelled datasets only");
    std::ofstream out(path);
    if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
    out << "label";
    for (std::size_t c = 0; c < data.feature_count(); ++c) out << ",x" << c;
    out << '\n';
    for (std::size_t r = 0; r < data.size(); ++r) {
        out << data.labels[r];
        for (double v : data.inputs[r]) out << fmt::format(",{}", v);
        out << '\n';
    }
}

}  // namespace balancekit
