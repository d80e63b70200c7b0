#include "pbdw/io.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "pbdw/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "persisted arrays are little-endian; big-endian hosts are unsupported");

namespace pbdw::io {

namespace {

using nlohmann::json;

void write_bytes(const std::filesystem::path& path, const void* data, std::size_t n) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ArtifactError("cannot open for writing: " + path.string());
    f.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!f) throw ArtifactError("short write: " + path.string());
}

std::vector<char> read_bytes(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw ArtifactError("cannot open for reading: " + path.string());
    const auto n = static_cast<std::size_t>(f.tellg());
    std::vector<char> buf(n);
    f.seekg(0);
    f.read(buf.data(), static_cast<std::streamsize>(n));
    if (!f) throw ArtifactError("short read: " + path.string());
    return buf;
}

void write_manifest(const std::filesystem::path& path, const json& j) {
    std::ofstream f(path);
    if (!f) throw ArtifactError("cannot open manifest for writing: " + path.string());
    f << j.dump(2) << "\n";
}

json load_manifest(const std::filesystem::path& bin_path, const std::string& expect_role,
                   const std::string& expect_format) {
    const auto mpath = bin_path.string() + ".json";
    std::ifstream f(mpath);
    if (!f) throw ArtifactError("missing manifest: " + mpath);
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw ArtifactError("corrupt manifest " + mpath + ": " + e.what());
    }
    if (j.value("format", "") != expect_format)
        throw ArtifactError("manifest format mismatch in " + mpath);
    if (!expect_role.empty() && j.value("role", "") != expect_role)
        throw ArtifactError("manifest role mismatch in " + mpath + ": expected '" + expect_role +
                            "', found '" + j.value("role", "") + "'");
    return j;
}

void check_sum(const json& manifest, const std::filesystem::path& path,
               const std::vector<char>& bytes) {
    const std::string expect = manifest.value("checksum", "");
    const std::string got = checksum_hex(bytes.data(), bytes.size());
    if (expect != got)
        throw ArtifactError("checksum mismatch for " + path.string() + " (manifest " + expect +
                            ", file " + got + ")");
}

}  // namespace

std::uint64_t fnv1a(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

std::string checksum_hex(const void* data, std::size_t n) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(data, n)));
    return buf;
}

void save_dense(const std::filesystem::path& path, const MatrixXd& m, const std::string& role) {
    const std::size_t nbytes = sizeof(double) * static_cast<std::size_t>(m.size());
    write_bytes(path, m.data(), nbytes);
    json j{{"format", "dense_f64_colmajor"},
           {"shape", {m.rows(), m.cols()}},
           {"role", role},
           {"checksum", checksum_hex(m.data(), nbytes)}};
    write_manifest(path.string() + ".json", j);
}

MatrixXd load_dense(const std::filesystem::path& path, const std::string& expect_role) {
    const json j = load_manifest(path, expect_role, "dense_f64_colmajor");
    const auto shape = j.at("shape");
    const long rows = shape.at(0).get<long>();
    const long cols = shape.at(1).get<long>();
    auto bytes = read_bytes(path);
    if (bytes.size() != sizeof(double) * static_cast<std::size_t>(rows * cols))
        throw ArtifactError("size mismatch for " + path.string());
    check_sum(j, path, bytes);
    MatrixXd m(rows, cols);
    std::memcpy(m.data(), bytes.data(), bytes.size());
    return m;
}

void save_vector(const std::filesystem::path& path, const VectorXd& v, const std::string& role) {
    save_dense(path, v, role);
}

VectorXd load_vector(const std::filesystem::path& path, const std::string& expect_role) {
    MatrixXd m = load_dense(path, expect_role);
    if (m.cols() != 1) throw ArtifactError("expected a single column in " + path.string());
    return m.col(0);
}

void save_sparse(const std::filesystem::path& path, const SpMat& m, const std::string& role) {
    struct Triplet {
        std::int64_t row, col;
        double value;
    };
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(m.nonZeros()));
    for (int k = 0; k < m.outerSize(); ++k)
        for (SpMat::InnerIterator it(m, k); it; ++it)
            trips.push_back({it.row(), it.col(), it.value()});
    const std::size_t nbytes = trips.size() * sizeof(Triplet);
    write_bytes(path, trips.data(), nbytes);
    json j{{"format", "coo_i64_f64"},
           {"shape", {m.rows(), m.cols()}},
           {"nnz", trips.size()},
           {"role", role},
           {"checksum", checksum_hex(trips.data(), nbytes)}};
    write_manifest(path.string() + ".json", j);
}

SpMat load_sparse(const std::filesystem::path& path, const std::string& expect_role) {
    struct Triplet {
        std::int64_t row, col;
        double value;
    };
    const json j = load_manifest(path, expect_role, "coo_i64_f64");
    const auto shape = j.at("shape");
    const long rows = shape.at(0).get<long>();
    const long cols = shape.at(1).get<long>();
    const auto nnz = j.at("nnz").get<std::size_t>();
    auto bytes = read_bytes(path);
    if (bytes.size() != nnz * sizeof(Triplet))
        throw ArtifactError("size mismatch for " + path.string());
    check_sum(j, path, bytes);

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(nnz);
    const auto* raw = reinterpret_cast<const Triplet*>(bytes.data());
    for (std::size_t i = 0; i < nnz; ++i)
        trips.emplace_back(static_cast<int>(raw[i].row), static_cast<int>(raw[i].col),
                           raw[i].value);
    SpMat m(rows, cols);
    m.setFromTriplets(trips.begin(), trips.end());
    m.makeCompressed();
    return m;
}

}  // namespace pbdw::io
