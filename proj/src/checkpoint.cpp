#include "pgx/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace pgx {

void ByteWriter::u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void ByteWriter::u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::str(std::string_view s) {
    u64(s.size());
    bytes_.insert(bytes_.end(), s.begin(), s.end());
}

void ByteWriter::tensor(const Tensor& t) {
    u64(t.rows());
    u64(t.cols());
    for (double v : t.data()) {
        f64(v);
    }
}

void ByteWriter::csr(const CsrMatrix& m) {
    u64(m.rows);
    u64(m.cols);
    u64(m.nnz());
    for (std::size_t p : m.row_ptr) {
        u64(p);
    }
    for (std::size_t c : m.col) {
        u64(c);
    }
    for (double v : m.val) {
        f64(v);
    }
}

ByteReader::ByteReader(const std::vector<std::uint8_t>& bytes, std::size_t begin, std::size_t end)
    : bytes_(bytes), pos_(begin), end_(std::min(end, bytes.size())) {}

void ByteReader::need(std::size_t n) const {
    if (end_ - pos_ < n) {
        throw FormatError("truncated binary data");
    }
}

std::uint8_t ByteReader::u8() {
    need(1);
    return bytes_[pos_++];
}

std::uint32_t ByteReader::u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    }
    return v;
}

std::uint64_t ByteReader::u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    }
    return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
}

Tensor ByteReader::tensor() {
    const std::uint64_t r = u64();
    const std::uint64_t c = u64();
    if (c != 0 && r > (end_ - pos_) / 8 / c) {
        throw FormatError("tensor shape exceeds the remaining data");
    }
    std::vector<double> data(r * c);
    for (double& v : data) {
        v = f64();
    }
    return Tensor(r, c, std::move(data));
}

CsrMatrix ByteReader::csr() {
    CsrMatrix m;
    m.rows = u64();
    m.cols = u64();
    const std::uint64_t nnz = u64();
    if (m.rows + 1 + 2 * nnz > (end_ - pos_) / 8) {
        throw FormatError("sparse matrix shape exceeds the remaining data");
    }
    m.row_ptr.resize(m.rows + 1);
    for (std::size_t& p : m.row_ptr) {
        p = u64();
    }
    m.col.resize(nnz);
    for (std::size_t& c : m.col) {
        c = u64();
    }
    m.val.resize(nnz);
    for (double& v : m.val) {
        v = f64();
    }
    if (m.row_ptr.front() != 0 || m.row_ptr.back() != nnz) {
        throw FormatError("sparse matrix row pointers are inconsistent");
    }
    return m;
}

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {
constexpr char magic[4] = {'P', 'G', 'X', '1'};
}

std::vector<std::uint8_t> seal_container(std::string_view kind, const std::vector<std::uint8_t>& payload) {
    ByteWriter w;
    for (char c : magic) {
        w.u8(static_cast<std::uint8_t>(c));
    }
    w.u32(container_version);
    w.str(kind);
    w.u64(payload.size());
    w.raw(payload);
    std::vector<std::uint8_t> out = std::move(w).take();
    const std::uint64_t h = fnv1a64(out.data(), out.size());
    ByteWriter tail;
    tail.u64(h);
    out.insert(out.end(), tail.bytes().begin(), tail.bytes().end());
    return out;
}

std::vector<std::uint8_t> open_container(const std::vector<std::uint8_t>& file, std::string_view kind) {
    if (file.size() < 4 + 4 + 8 + 8 + 8 || std::memcmp(file.data(), magic, 4) != 0) {
        throw FormatError("not a pgx container (bad magic)");
    }
    ByteReader head(file, 4, file.size() - 8);
    const std::uint32_t version = head.u32();
    if (version != container_version) {
        throw FormatError("unsupported container version " + std::to_string(version) + " (expected " +
                          std::to_string(container_version) + ")");
    }
    ByteReader tail(file, file.size() - 8);
    if (tail.u64() != fnv1a64(file.data(), file.size() - 8)) {
        throw FormatError("checksum mismatch: container is corrupted");
    }
    const std::string found = head.str();
    if (found != kind) {
        throw FormatError("container holds '" + found + "', expected '" + std::string(kind) + "'");
    }
    const std::uint64_t n = head.u64();
    const std::size_t start = file.size() - 8 - n;
    if (n > file.size() || start != 4 + 4 + 8 + found.size() + 8) {
        throw FormatError("container payload length is inconsistent");
    }
    return {file.begin() + static_cast<std::ptrdiff_t>(start), file.end() - 8};
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> encode_model(const TrainedModel& model) {
    ByteWriter w;
    w.str(model.spec.serialize());
    w.u64(model.seed);
    w.u64(model.params.size());
    for (const Parameter& p : model.params) {
        w.str(p.name);
        w.tensor(p.value);
    }
    w.csr(model.edge_pattern);
    w.u64(model.log.epochs.size());
    for (const EpochRecord& e : model.log.epochs) {
        w.f64(e.total);
        w.u64(e.components.size());
        for (const auto& [k, v] : e.components) {
            w.str(k);
            w.f64(v);
        }
    }
    return seal_container("model", w.bytes());
}

TrainedModel decode_model(const std::vector<std::uint8_t>& file) {
    const std::vector<std::uint8_t> payload = open_container(file, "model");
    ByteReader r(payload);
    TrainedModel m;
    m.spec = ModelSpec::deserialize(r.str());
    m.seed = r.u64();
    const std::uint64_t n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
        Parameter p;
        p.name = r.str();
        p.value = r.tensor();
        m.params.push_back(std::move(p));
    }
    m.edge_pattern = r.csr();
    const std::uint64_t epochs = r.u64();
    for (std::uint64_t i = 0; i < epochs; ++i) {
        EpochRecord e;
        e.total = r.f64();
        const std::uint64_t k = r.u64();
        for (std::uint64_t j = 0; j < k; ++j) {
            std::string key = r.str();
            e.components[key] = r.f64();
        }
        m.log.epochs.push_back(std::move(e));
    }
    if (!r.done()) {
        throw FormatError("trailing bytes in model checkpoint");
    }
    return m;
}

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path) {
    write_file_bytes(path, encode_model(model));
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
    try {
        return decode_model(read_file_bytes(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void save_tensor(const Tensor& t, const std::filesystem::path& path) {
    ByteWriter w;
    w.tensor(t);
    write_file_bytes(path, seal_container("tensor", w.bytes()));
}

Tensor load_tensor(const std::filesystem::path& path) {
    const auto payload = open_container(read_file_bytes(path), "tensor");
    ByteReader r(payload);
    Tensor t = r.tensor();
    if (!r.done()) {
        throw FormatError("trailing bytes in tensor file");
    }
    return t;
}

void save_csr(const CsrMatrix& m, const std::filesystem::path& path) {
    ByteWriter w;
    w.csr(m);
    write_file_bytes(path, seal_container("csr", w.bytes()));
}

CsrMatrix load_csr(const std::filesystem::path& path) {
    const auto payload = open_container(read_file_bytes(path), "csr");
    ByteReader r(payload);
    CsrMatrix m = r.csr();
    if (!r.done()) {
        throw FormatError("trailing bytes in sparse matrix file");
    }
    return m;
}

} // namespace pgx
