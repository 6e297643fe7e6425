#include "protoscope/feature_store.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace protoscope {

namespace {

constexpr char kBinaryMagic[4] = {'P', 'F', 'V', '1'};

std::uint32_t read_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

void write_u32_le(std::ostream& out, std::uint32_t v) {
    const unsigned char bytes[4] = {
        static_cast<unsigned char>(v & 0xFF), static_cast<unsigned char>((v >> 8) & 0xFF),
        static_cast<unsigned char>((v >> 16) & 0xFF), static_cast<unsigned char>((v >> 24) & 0xFF)};
    out.write(reinterpret_cast<const char*>(bytes), 4);
}

float read_f32_le(const unsigned char* p) {
    const std::uint32_t bits = read_u32_le(p);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

void write_f32_le(std::ostream& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    write_u32_le(out, bits);
}

double parse_double(std::string_view text, std::int64_t row, std::int64_t col) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw DataError("malformed number '" + std::string(text) + "' at row " +
                        std::to_string(row) + ", column " + std::to_string(col));
    }
    return value;
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            fields.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
    return fields;
}

FeatureSet load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw DataError("empty file '" + path + "'");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const auto header = split_csv(line);
    if (header.empty() || header[0] != "label") {
        throw DataError("malformed header in '" + path + "': expected 'label,f0,...'");
    }
    const std::int64_t dim = static_cast<std::int64_t>(header.size()) - 1;
    if (dim < 1) throw DataError("malformed header in '" + path + "': no feature columns");
    for (std::int64_t d = 0; d < dim; ++d) {
        const std::string expected = "f" + std::to_string(d);
        if (header[static_cast<std::size_t>(d + 1)] != expected) {
            throw DataError("malformed header in '" + path + "': column " + std::to_string(d + 1) +
                            " is '" + std::string(header[static_cast<std::size_t>(d + 1)]) +
                            "', expected '" + expected + "'");
        }
    }

    std::vector<std::int64_t> raw_labels;
    std::vector<double> values;
    std::int64_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;
        const auto fields = split_csv(line);
        if (static_cast<std::int64_t>(fields.size()) != dim + 1) {
            throw DataError("inconsistent row width at row " + std::to_string(row) + ": got " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(dim + 1));
        }
        std::int64_t label = 0;
        const auto [ptr, ec] =
            std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), label);
        if (ec != std::errc{} || ptr != fields[0].data() + fields[0].size()) {
            throw DataError("malformed label '" + std::string(fields[0]) + "' at row " +
                            std::to_string(row));
        }
        raw_labels.push_back(label);
        for (std::int64_t d = 0; d < dim; ++d) {
            const double v = parse_double(fields[static_cast<std::size_t>(d + 1)], row, d + 1);
            if (!std::isfinite(v)) {
                throw DataError("non-finite value at row " + std::to_string(row) + ", column " +
                                std::to_string(d + 1));
            }
            values.push_back(v);
        }
    }
    if (raw_labels.empty()) throw DataError("no data rows in '" + path + "'");

    // Dense remap, preserving the numeric order of the original labels.
    std::map<std::int64_t, std::int32_t> remap;
    for (const std::int64_t l : raw_labels) remap.emplace(l, 0);
    std::int32_t next_id = 0;
    for (auto& [orig, dense] : remap) dense = next_id++;

    FeatureSet fs;
    const std::int64_t rows = static_cast<std::int64_t>(raw_labels.size());
    fs.features.resize(rows, dim);
    fs.labels.resize(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        fs.labels[static_cast<std::size_t>(r)] = remap.at(raw_labels[static_cast<std::size_t>(r)]);
        for (std::int64_t d = 0; d < dim; ++d) {
            fs.features(r, d) = values[static_cast<std::size_t>(r * dim + d)];
        }
    }
    fs.class_count = next_id;
    fs.original_ids.reserve(remap.size());
    for (const auto& [orig, dense] : remap) fs.original_ids.push_back(orig);
    fs.validate();
    return fs;
}

FeatureSet load_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.empty()) throw DataError("empty file '" + path + "'");
    if (bytes.size() < 16) {
        throw DataError("truncated header in '" + path + "': " + std::to_string(bytes.size()) +
                        " bytes, need 16");
    }
    if (std::memcmp(bytes.data(), kBinaryMagic, 4) != 0) {
        throw DataError("bad magic in '" + path + "' at byte 0: expected 'PFV1'");
    }
    const std::uint32_t rows = read_u32_le(bytes.data() + 4);
    const std::uint32_t dim = read_u32_le(bytes.data() + 8);
    const std::uint32_t classes = read_u32_le(bytes.data() + 12);
    if (rows < 1 || dim < 1 || classes < 1) {
        throw DataError("invalid counts in '" + path + "': rows=" + std::to_string(rows) +
                        " dim=" + std::to_string(dim) + " classes=" + std::to_string(classes));
    }
    const std::size_t record = 4 + 4 * static_cast<std::size_t>(dim);
    const std::size_t expected = 16 + record * rows;
    if (bytes.size() != expected) {
        throw DataError("size mismatch in '" + path + "': " + std::to_string(bytes.size()) +
                        " bytes, expected " + std::to_string(expected));
    }

    FeatureSet fs;
    fs.features.resize(rows, dim);
    fs.labels.resize(rows);
    fs.class_count = static_cast<std::int32_t>(classes);
    for (std::uint32_t r = 0; r < rows; ++r) {
        const unsigned char* p = bytes.data() + 16 + record * r;
        const std::uint32_t label = read_u32_le(p);
        if (label >= classes) {
            throw DataError("label " + std::to_string(label) + " out of range at record " +
                            std::to_string(r) + " (byte " + std::to_string(16 + record * r) + ")");
        }
        fs.labels[r] = static_cast<std::int32_t>(label);
        for (std::uint32_t d = 0; d < dim; ++d) {
            const float v = read_f32_le(p + 4 + 4 * d);
            if (!std::isfinite(v)) {
                throw DataError("non-finite value at record " + std::to_string(r) + ", dim " +
                                std::to_string(d));
            }
            fs.features(r, d) = static_cast<double>(v);
        }
    }
    fs.validate();
    return fs;
}

}  // namespace

void FeatureSet::validate() const {
    if (rows() < 1 || dim() < 1) throw DataError("feature set must have at least 1 row and 1 dim");
    if (static_cast<std::int64_t>(labels.size()) != rows()) {
        throw DataError("label count " + std::to_string(labels.size()) + " != row count " +
                        std::to_string(rows()));
    }
    if (class_count < 1) throw DataError("class_count must be >= 1");
    std::vector<std::int64_t> counts(static_cast<std::size_t>(class_count), 0);
    for (std::size_t r = 0; r < labels.size(); ++r) {
        const std::int32_t l = labels[r];
        if (l < 0 || l >= class_count) {
            throw DataError("label " + std::to_string(l) + " out of range at row " +
                            std::to_string(r));
        }
        ++counts[static_cast<std::size_t>(l)];
    }
    for (std::int32_t c = 0; c < class_count; ++c) {
        if (counts[static_cast<std::size_t>(c)] == 0) {
            throw DataError("class " + std::to_string(c) + " has no rows");
        }
    }
    if (!original_ids.empty() &&
        static_cast<std::int64_t>(original_ids.size()) != class_count) {
        throw DataError("original_ids size != class_count");
    }
    if (!features.allFinite()) {
        for (std::int64_t r = 0; r < rows(); ++r) {
            if (!features.row(r).allFinite()) {
                throw DataError("non-finite value at row " + std::to_string(r));
            }
        }
    }
}

std::vector<std::vector<std::int64_t>> FeatureSet::rows_by_class() const {
    std::vector<std::vector<std::int64_t>> by_class(static_cast<std::size_t>(class_count));
    for (std::size_t r = 0; r < labels.size(); ++r) {
        by_class[static_cast<std::size_t>(labels[r])].push_back(static_cast<std::int64_t>(r));
    }
    return by_class;
}

FileFormat format_from_path(const std::string& path) {
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) return FileFormat::Csv;
    return FileFormat::Binary;
}

FeatureSet load_features(const std::string& path, FileFormat format) {
    return format == FileFormat::Csv ? load_csv(path) : load_binary(path);
}

void save_features(const FeatureSet& fs, const std::string& path, FileFormat format) {
    fs.validate();
    if (format == FileFormat::Csv) {
        std::ofstream out(path);
        if (!out) throw DataError("cannot write '" + path + "'");
        out << "label";
        for (std::int64_t d = 0; d < fs.dim(); ++d) out << ",f" << d;
        out << "\n";
        char buf[64];
        for (std::int64_t r = 0; r < fs.rows(); ++r) {
            out << fs.labels[static_cast<std::size_t>(r)];
            for (std::int64_t d = 0; d < fs.dim(); ++d) {
                std::snprintf(buf, sizeof(buf), "%.17g", fs.features(r, d));
                out << ',' << buf;
            }
            out << "\n";
        }
        if (!out) throw DataError("write failed for '" + path + "'");
    } else {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError("cannot write '" + path + "'");
        out.write(kBinaryMagic, 4);
        write_u32_le(out, static_cast<std::uint32_t>(fs.rows()));
        write_u32_le(out, static_cast<std::uint32_t>(fs.dim()));
        write_u32_le(out, static_cast<std::uint32_t>(fs.class_count));
        for (std::int64_t r = 0; r < fs.rows(); ++r) {
            write_u32_le(out, static_cast<std::uint32_t>(fs.labels[static_cast<std::size_t>(r)]));
            for (std::int64_t d = 0; d < fs.dim(); ++d) {
                write_f32_le(out, static_cast<float>(fs.features(r, d)));
            }
        }
        if (!out) throw DataError("write failed for '" + path + "'");
    }
}

std::vector<ClassStats> compute_class_stats(const FeatureSet& fs, Divisor divisor) {
    fs.validate();
    const auto by_class = fs.rows_by_class();
    const std::int64_t dim = fs.dim();

    std::vector<ClassStats> stats;
    stats.reserve(by_class.size());
    for (std::int32_t c = 0; c < fs.class_count; ++c) {
        const auto& rows = by_class[static_cast<std::size_t>(c)];
        const std::int64_t n = static_cast<std::int64_t>(rows.size());
        if (divisor == Divisor::Sample && n < 2) {
            throw ConfigError("sample covariance needs >= 2 rows; class " + std::to_string(c) +
                              " has " + std::to_string(n));
        }
        ClassStats cs;
        cs.class_id = c;
        cs.count = n;
        cs.mean = Eigen::VectorXd::Zero(dim);
        for (const std::int64_t r : rows) cs.mean += fs.features.row(r).transpose();
        cs.mean /= static_cast<double>(n);

        cs.covariance = Eigen::MatrixXd::Zero(dim, dim);
        for (const std::int64_t r : rows) {
            const Eigen::VectorXd d = fs.features.row(r).transpose() - cs.mean;
            cs.covariance.noalias() += d * d.transpose();
        }
        const double denom =
            divisor == Divisor::Population ? static_cast<double>(n) : static_cast<double>(n - 1);
        cs.covariance /= denom;
        cs.trace_cov = cs.covariance.trace();
        stats.push_back(std::move(cs));
    }
    return stats;
}

Eigen::VectorXd uniform_weights(std::int64_t class_count) {
    if (class_count < 1) throw ConfigError("class count must be >= 1");
    return Eigen::VectorXd::Constant(class_count, 1.0 / static_cast<double>(class_count));
}

EnsembleStats compute_ensemble_stats(const std::vector<ClassStats>& per_class,
                                     const Eigen::VectorXd& class_weights) {
    if (per_class.empty()) throw ConfigError("ensemble stats need at least 1 class");
    if (class_weights.size() != static_cast<std::int64_t>(per_class.size())) {
        throw ConfigError("weight count " + std::to_string(class_weights.size()) +
                          " != class count " + std::to_string(per_class.size()));
    }
    if ((class_weights.array() < 0.0).any()) throw ConfigError("negative class weight");
    if (std::abs(class_weights.sum() - 1.0) > 1e-12) {
        throw ConfigError("class weights sum to " + std::to_string(class_weights.sum()) +
                          ", expected 1");
    }
    const std::int64_t dim = per_class.front().mean.size();
    for (const auto& cs : per_class) {
        if (cs.mean.size() != dim || cs.covariance.rows() != dim || cs.covariance.cols() != dim) {
            throw ConfigError("inconsistent dimensions in per-class stats");
        }
    }

    EnsembleStats es;
    es.per_class = per_class;
    es.class_weights = class_weights;

    es.grand_mean = Eigen::VectorXd::Zero(dim);
    for (std::size_t c = 0; c < per_class.size(); ++c) {
        es.grand_mean += class_weights(static_cast<std::int64_t>(c)) * per_class[c].mean;
    }

    es.between_cov = Eigen::MatrixXd::Zero(dim, dim);
    es.mean_within_cov = Eigen::MatrixXd::Zero(dim, dim);
    double mean_trace = 0.0;
    for (std::size_t c = 0; c < per_class.size(); ++c) {
        const double w = class_weights(static_cast<std::int64_t>(c));
        const Eigen::VectorXd d = per_class[c].mean - es.grand_mean;
        es.between_cov.noalias() += w * (d * d.transpose());
        es.mean_within_cov += w * per_class[c].covariance;
        mean_trace += w * per_class[c].trace_cov;
    }
    es.trace_between = es.between_cov.trace();
    es.trace_within = es.mean_within_cov.trace();
    es.var_trace_within = 0.0;
    for (std::size_t c = 0; c < per_class.size(); ++c) {
        const double w = class_weights(static_cast<std::int64_t>(c));
        const double dev = per_class[c].trace_cov - mean_trace;
        es.var_trace_within += w * dev * dev;
    }
    es.mu_sq_norm = es.grand_mean.squaredNorm();
    return es;
}

EnsembleStats ensemble_stats_of(const FeatureSet& fs, Divisor divisor) {
    const auto stats = compute_class_stats(fs, divisor);
    return compute_ensemble_stats(stats, uniform_weights(static_cast<std::int64_t>(stats.size())));
}

Eigen::VectorXd norm_sq_variance_per_class(const FeatureSet& fs, Divisor divisor) {
    fs.validate();
    const auto by_class = fs.rows_by_class();
    Eigen::VectorXd out(fs.class_count);
    for (std::int32_t c = 0; c < fs.class_count; ++c) {
        const auto& rows = by_class[static_cast<std::size_t>(c)];
        const std::int64_t n = static_cast<std::int64_t>(rows.size());
        if (divisor == Divisor::Sample && n < 2) {
            throw ConfigError("sample variance needs >= 2 rows; class " + std::to_string(c) +
                              " has " + std::to_string(n));
        }
        double mean = 0.0;
        for (const std::int64_t r : rows) mean += fs.features.row(r).squaredNorm();
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (const std::int64_t r : rows) {
            const double dev = fs.features.row(r).squaredNorm() - mean;
            var += dev * dev;
        }
        var /= divisor == Divisor::Population ? static_cast<double>(n)
                                              : static_cast<double>(n - 1);
        // Spread below double-precision resolution of the norms themselves is
        // indistinguishable from rounding; report it as exactly zero.
        const double resolution = 64.0 * std::numeric_limits<double>::epsilon() *
                                  static_cast<double>(std::max<std::int64_t>(fs.dim(), 4)) *
                                  std::abs(mean);
        if (var <= resolution * resolution) var = 0.0;
        out(c) = var;
    }
    return out;
}

}  // namespace protoscope
