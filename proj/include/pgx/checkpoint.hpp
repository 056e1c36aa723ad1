#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pgx/models.hpp"

namespace pgx {

/// Little-endian binary encoder.
class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f64(double v);
    void str(std::string_view s);
    void tensor(const Tensor& t);
    void csr(const CsrMatrix& m);
    void raw(const std::vector<std::uint8_t>& b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }

    const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }
    std::vector<std::uint8_t> take() && { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(const std::vector<std::uint8_t>& bytes, std::size_t begin = 0,
                        std::size_t end = SIZE_MAX);

    std::uint8_t u8();
    std::uint32_t u32();
    std::uint64_t u64();
    double f64();
    std::string str();
    Tensor tensor();
    CsrMatrix csr();
    bool done() const noexcept { return pos_ == end_; }

private:
    void need(std::size_t n) const;

    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_;
    std::size_t end_;
};

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n);

inline constexpr std::uint32_t container_version = 1;

/// "PGX1" magic, version, kind tag, payload, FNV-1a checksum of everything before it.
std::vector<std::uint8_t> seal_container(std::string_view kind, const std::vector<std::uint8_t>& payload);
/// Verifies magic, version, kind and checksum; returns the payload bytes.
std::vector<std::uint8_t> open_container(const std::vector<std::uint8_t>& file, std::string_view kind);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> encode_model(const TrainedModel& model);
TrainedModel decode_model(const std::vector<std::uint8_t>& file);

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_checkpoint(const std::filesystem::path& path);

void save_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path);
void save_csr(const CsrMatrix& m, const std::filesystem::path& path);
CsrMatrix load_csr(const std::filesystem::path& path);

} // namespace pgx
