#include "tagi/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "tagi/rng.hpp"

namespace tagi::data {

namespace {

std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw std::runtime_error("data: truncated IDX file: " + path);
    }
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

void standardize_inputs(Dataset& ds) {
    if (ds.inputs.empty()) return;
    const std::size_t dim = ds.inputs[0].size();
    ds.norm.mean.assign(dim, 0.0);
    ds.norm.sd.assign(dim, 0.0);
    for (const auto& row : ds.inputs) {
        for (std::size_t d = 0; d < dim; ++d) ds.norm.mean[d] += row[d];
    }
    for (std::size_t d = 0; d < dim; ++d) ds.norm.mean[d] /= static_cast<double>(ds.size());
    for (const auto& row : ds.inputs) {
        for (std::size_t d = 0; d < dim; ++d) {
            const double c = row[d] - ds.norm.mean[d];
            ds.norm.sd[d] += c * c;
        }
    }
    for (std::size_t d = 0; d < dim; ++d) {
        ds.norm.sd[d] = std::sqrt(ds.norm.sd[d] / static_cast<double>(ds.size()));
        if (ds.norm.sd[d] == 0.0) ds.norm.sd[d] = 1.0;
    }
    for (auto& row : ds.inputs) {
        for (std::size_t d = 0; d < dim; ++d) row[d] = (row[d] - ds.norm.mean[d]) / ds.norm.sd[d];
    }
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw std::runtime_error("data: cannot open " + images_path);
    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw std::runtime_error("data: cannot open " + labels_path);

    const std::uint32_t img_magic = read_u32_be(imgs, images_path);
    if (img_magic != 0x00000803u) {
        throw std::runtime_error("data: bad image magic in " + images_path);
    }
    const std::uint32_t n_images = read_u32_be(imgs, images_path);
    const std::uint32_t rows = read_u32_be(imgs, images_path);
    const std::uint32_t cols = read_u32_be(imgs, images_path);

    const std::uint32_t lab_magic = read_u32_be(labs, labels_path);
    if (lab_magic != 0x00000801u) {
        throw std::runtime_error("data: bad label magic in " + labels_path);
    }
    const std::uint32_t n_labels = read_u32_be(labs, labels_path);
    if (n_images != n_labels) {
        throw std::runtime_error("data: image/label count mismatch: " + images_path);
    }

    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    std::vector<unsigned char> img_buf(pixels);
    std::vector<unsigned char> lab_buf(n_labels);
    if (!labs.read(reinterpret_cast<char*>(lab_buf.data()),
                   static_cast<std::streamsize>(n_labels))) {
        throw std::runtime_error("data: truncated IDX file: " + labels_path);
    }

    Dataset ds;
    ds.kind = DatasetKind::classification;
    ds.inputs.reserve(n_images);
    int max_label = 0;
    for (std::uint32_t i = 0; i < n_images; ++i) {
        if (!imgs.read(reinterpret_cast<char*>(img_buf.data()),
                       static_cast<std::streamsize>(pixels))) {
            throw std::runtime_error("data: truncated IDX file: " + images_path);
        }
        std::vector<double> row(pixels);
        for (std::size_t p = 0; p < pixels; ++p) row[p] = img_buf[p] / 255.0;
        ds.inputs.push_back(std::move(row));
        max_label = std::max(max_label, static_cast<int>(lab_buf[i]));
    }
    ds.class_count = max_label + 1;
    ds.targets.reserve(n_images);
    for (std::uint32_t i = 0; i < n_labels; ++i) {
        std::vector<double> one_hot(ds.class_count, 0.0);
        one_hot[lab_buf[i]] = 1.0;
        ds.targets.push_back(std::move(one_hot));
    }
    return ds;
}

Dataset toy_cubic(int n, double sigma_v, double lo, double hi, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("data: toy_cubic needs n >= 1");
    rng::Rng rng(seed);
    Dataset ds;
    ds.kind = DatasetKind::regression;
    ds.inputs.reserve(static_cast<std::size_t>(n));
    ds.targets.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double x = rng.uniform(lo, hi);
        const double y = x * x * x - 3.0 * x + (sigma_v > 0.0 ? rng.normal(0.0, sigma_v) : 0.0);
        ds.inputs.push_back({x});
        ds.targets.push_back({y});
    }
    standardize_inputs(ds);
    return ds;
}

Dataset toy_cubic(int n, double sigma_v, std::uint64_t seed) {
    return toy_cubic(n, sigma_v, -2.0, 2.0, seed);
}

Dataset subset(const Dataset& ds, int count, std::uint64_t seed) {
    if (count < 0 || static_cast<std::size_t>(count) > ds.size()) {
        throw std::invalid_argument("data: subset count out of range");
    }
    Dataset out;
    out.kind = ds.kind;
    out.class_count = ds.class_count;
    out.norm = ds.norm;
    rng::Rng rng(seed);

    std::vector<std::size_t> picked;
    if (ds.kind == DatasetKind::classification) {
        std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.class_count));
        for (std::size_t i = 0; i < ds.size(); ++i) {
            by_class[static_cast<std::size_t>(label_of(ds.targets[i]))].push_back(i);
        }
        const int base = count / ds.class_count;
        const int remainder = count % ds.class_count;
        for (int c = 0; c < ds.class_count; ++c) {
            const int want = base + (c < remainder ? 1 : 0);
            auto& pool = by_class[static_cast<std::size_t>(c)];
            if (static_cast<int>(pool.size()) < want) {
                throw std::invalid_argument("data: class " + std::to_string(c) +
                                            " has too few examples for stratified subset");
            }
            rng::shuffle(pool, rng);
            picked.insert(picked.end(), pool.begin(), pool.begin() + want);
        }
    } else {
        picked.resize(ds.size());
        std::iota(picked.begin(), picked.end(), std::size_t{0});
        rng::shuffle(picked, rng);
        picked.resize(static_cast<std::size_t>(count));
    }
    std::sort(picked.begin(), picked.end());
    for (const std::size_t i : picked) {
        out.inputs.push_back(ds.inputs[i]);
        out.targets.push_back(ds.targets[i]);
    }
    return out;
}

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("data: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("data: empty CSV: " + path);

    Dataset ds;
    ds.kind = DatasetKind::regression;
    std::size_t columns = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw std::runtime_error("data: non-numeric CSV cell in " + path);
            }
        }
        if (row.size() < 2) throw std::runtime_error("data: CSV row needs >= 2 columns: " + path);
        if (columns == 0) {
            columns = row.size();
        } else if (row.size() != columns) {
            throw std::runtime_error("data: ragged CSV row in " + path);
        }
        ds.targets.push_back({row.back()});
        row.pop_back();
        ds.inputs.push_back(std::move(row));
    }
    if (ds.inputs.empty()) throw std::runtime_error("data: CSV has no data rows: " + path);
    standardize_inputs(ds);
    return ds;
}

int label_of(const std::vector<double>& target_row) {
    return static_cast<int>(
        std::max_element(target_row.begin(), target_row.end()) - target_row.begin());
}

}  // namespace tagi::data
