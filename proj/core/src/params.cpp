#include "keyflow/params.hpp"

#include "keyflow/errors.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace keyflow {

namespace {

constexpr char kMagic[8] = {'K', 'F', 'L', 'O', 'W', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is written as raw little-endian float64");

void write_matrix(std::ostream& os, const Mat& mat) {
    // Row-major entry order, independent of Eigen's internal layout.
    std::vector<double> row(static_cast<std::size_t>(mat.cols()));
    for (Eigen::Index r = 0; r < mat.rows(); ++r) {
        for (Eigen::Index c = 0; c < mat.cols(); ++c)
            row[static_cast<std::size_t>(c)] = mat(r, c);
        os.write(reinterpret_cast<const char*>(row.data()),
                 static_cast<std::streamsize>(row.size() * sizeof(double)));
    }
}

Mat read_matrix(std::istream& is, Eigen::Index rows, Eigen::Index cols) {
    Mat mat(rows, cols);
    std::vector<double> row(static_cast<std::size_t>(cols));
    for (Eigen::Index r = 0; r < rows; ++r) {
        is.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(double)));
        if (!is) throw DataError("checkpoint: truncated payload");
        for (Eigen::Index c = 0; c < cols; ++c) mat(r, c) = row[static_cast<std::size_t>(c)];
    }
    return mat;
}

}  // namespace

Mat& ParamStore::value(const std::string& name) {
    auto it = values.find(name);
    if (it == values.end())
        throw std::invalid_argument("ParamStore: unknown parameter '" + name + "'");
    return it->second;
}

const Mat& ParamStore::value(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end())
        throw std::invalid_argument("ParamStore: unknown parameter '" + name + "'");
    return it->second;
}

void ParamStore::create(const std::string& name, Mat initial) {
    if (name.empty()) throw std::invalid_argument("ParamStore: empty parameter name");
    auto [it, inserted] = values.try_emplace(name, std::move(initial));
    if (!inserted)
        throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
}

std::size_t ParamStore::total_entries() const {
    std::size_t n = 0;
    for (const auto& [name, mat] : values) n += static_cast<std::size_t>(mat.size());
    return n;
}

void adam_step(ParamStore& store, const std::map<std::string, Mat>& grads, const AdamConfig& cfg) {
    store.step_count += 1;
    const double t = static_cast<double>(store.step_count);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (const auto& [name, grad] : grads) {
        Mat& value = store.value(name);
        if (grad.rows() != value.rows() || grad.cols() != value.cols())
            throw std::invalid_argument("adam_step: gradient shape mismatch for '" + name + "'");
        if (!grad.allFinite())
            throw std::runtime_error("adam_step: non-finite gradient for '" + name + "'");
        Mat& m = store.m.try_emplace(name, Mat::Zero(value.rows(), value.cols())).first->second;
        Mat& v = store.v.try_emplace(name, Mat::Zero(value.rows(), value.cols())).first->second;
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
        const Mat m_hat = m / bc1;
        const Mat v_hat = v / bc2;
        value -= cfg.lr * (m_hat.array() / (v_hat.array().sqrt() + cfg.eps)).matrix();
    }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    nlohmann::json meta;
    meta["step"] = ck.step;
    meta["variant"] = ck.variant;
    meta["sigma"] = ck.sigma;
    meta["config"] = ck.config_text;
    meta["dtype"] = "float64";
    nlohmann::json arrays = nlohmann::json::array();
    for (const auto& [name, mat] : ck.params.values) {
        arrays.push_back({{"name", name},
                          {"rows", mat.rows()},
                          {"cols", mat.cols()}});
    }
    meta["arrays"] = std::move(arrays);
    meta["optimizer_step"] = ck.params.step_count;
    const std::string meta_text = meta.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
    os.write(kMagic, sizeof(kMagic));
    const std::uint32_t version = kVersion;
    os.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t meta_len = meta_text.size();
    os.write(reinterpret_cast<const char*>(&meta_len), sizeof(meta_len));
    os.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));

    auto moment_or_zero = [](const std::map<std::string, Mat>& moments, const std::string& name,
                             const Mat& shape) -> Mat {
        auto it = moments.find(name);
        return it == moments.end() ? Mat::Zero(shape.rows(), shape.cols()) : it->second;
    };
    for (const auto& [name, mat] : ck.params.values) write_matrix(os, mat);
    for (const auto& [name, mat] : ck.params.values)
        write_matrix(os, moment_or_zero(ck.params.m, name, mat));
    for (const auto& [name, mat] : ck.params.values)
        write_matrix(os, moment_or_zero(ck.params.v, name, mat));
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("load_checkpoint: cannot open " + path.string());

    char magic[sizeof(kMagic)];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw DataError("load_checkpoint: bad magic in " + path.string());
    std::uint32_t version = 0;
    is.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (!is || version != kVersion)
        throw DataError("load_checkpoint: unsupported version in " + path.string());
    std::uint64_t meta_len = 0;
    is.read(reinterpret_cast<char*>(&meta_len), sizeof(meta_len));
    if (!is || meta_len > (1ull << 30))
        throw DataError("load_checkpoint: bad metadata length in " + path.string());
    std::string meta_text(meta_len, '\0');
    is.read(meta_text.data(), static_cast<std::streamsize>(meta_len));
    if (!is) throw DataError("load_checkpoint: truncated metadata in " + path.string());

    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(meta_text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("load_checkpoint: metadata parse error: ") + e.what());
    }

    Checkpoint ck;
    try {
        ck.step = meta.at("step").get<long>();
        ck.variant = meta.at("variant").get<std::string>();
        ck.sigma = meta.at("sigma").get<double>();
        ck.config_text = meta.at("config").get<std::string>();
        if (meta.at("dtype").get<std::string>() != "float64")
            throw DataError("load_checkpoint: unsupported dtype");
        ck.params.step_count = meta.at("optimizer_step").get<long>();
        std::vector<std::pair<std::string, std::pair<Eigen::Index, Eigen::Index>>> descriptors;
        for (const auto& entry : meta.at("arrays")) {
            descriptors.emplace_back(entry.at("name").get<std::string>(),
                                     std::make_pair(entry.at("rows").get<Eigen::Index>(),
                                                    entry.at("cols").get<Eigen::Index>()));
        }
        for (const auto& [name, shape] : descriptors)
            ck.params.create(name, read_matrix(is, shape.first, shape.second));
        for (const auto& [name, shape] : descriptors)
            ck.params.m[name] = read_matrix(is, shape.first, shape.second);
        for (const auto& [name, shape] : descriptors)
            ck.params.v[name] = read_matrix(is, shape.first, shape.second);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("load_checkpoint: metadata field error: ") + e.what());
    }
    return ck;
}

}  // namespace keyflow
