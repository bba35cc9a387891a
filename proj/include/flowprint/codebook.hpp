#pragma once

// The secret fingerprint codebook shared by Alice and Bob: generation from
// independent Poisson processes, per-flow rate scaling, and a bit-exact
// binary file format.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "flowprint/error.hpp"
#include "flowprint/stochastic.hpp"

namespace flowprint {

/// One codeword: release offsets within [0, T2], measured from the phase-2
/// anchor. The inter-packet delays are the successive differences, with the
/// first delay measured from the anchor.
struct Fingerprint {
  std::uint64_t index = 0;  // 1-based
  std::vector<double> offsets;

  std::size_t size() const noexcept { return offsets.size(); }

  std::vector<double> delays() const {
    std::vector<double> d(offsets.size());
    std::adjacent_difference(offsets.begin(), offsets.end(), d.begin());
    return d;
  }

  bool operator==(const Fingerprint&) const = default;
};

struct Codebook {
  double rate = 0.0;  // packets/second of every codeword (lambda_min)
  double t2 = 0.0;    // horizon of the fingerprinting phase, seconds
  std::vector<Fingerprint> fingerprints;

  std::size_t size() const noexcept { return fingerprints.size(); }

  const Fingerprint& at(std::uint64_t index) const {
    if (index < 1 || index > fingerprints.size() ||
        fingerprints[index - 1].index != index) {
      auto it = std::find_if(fingerprints.begin(), fingerprints.end(),
                             [&](const Fingerprint& f) { return f.index == index; });
      if (it == fingerprints.end()) throw DomainError("Codebook: no such index");
      return *it;
    }
    return fingerprints[index - 1];
  }

  /// Throws ValidationError on any broken invariant.
  void validate() const {
    if (fingerprints.empty()) throw ValidationError("codebook: m must be >= 1");
    if (!(std::isfinite(rate) && rate > 0.0) || !(std::isfinite(t2) && t2 > 0.0)) {
      throw ValidationError("codebook: rate and T2 must be positive");
    }
    std::set<std::uint64_t> seen;
    for (const auto& fp : fingerprints) {
      if (fp.index < 1 || fp.index > fingerprints.size()) {
        throw ValidationError("codebook: index out of range 1..m");
      }
      if (!seen.insert(fp.index).second) {
        throw ValidationError("codebook: duplicate fingerprint index " +
                              std::to_string(fp.index));
      }
      for (std::size_t k = 0; k < fp.offsets.size(); ++k) {
        const double o = fp.offsets[k];
        if (!(o > 0.0 && o <= t2) || (k > 0 && !(fp.offsets[k - 1] < o))) {
          throw ValidationError("codebook: fingerprint " + std::to_string(fp.index) +
                                " offsets must be strictly increasing within (0, T2]");
        }
      }
    }
  }

  bool operator==(const Codebook&) const = default;
};

/// m codewords, each an independent Poisson(rate) process on (0, t2).
/// Codeword l draws from stream derive_stream(rng.stream_id, l), so each
/// codeword does not depend on m.
inline Codebook generate_codebook(std::size_t m, double rate, double t2, RngState rng) {
  detail::require(m >= 1, "generate_codebook: m must be >= 1");
  detail::require(std::isfinite(rate) && rate > 0.0 && std::isfinite(t2) && t2 > 0.0,
                  "generate_codebook: rate and t2 must be positive");
  Codebook cb{rate, t2, {}};
  cb.fingerprints.reserve(m);
  for (std::size_t l = 1; l <= m; ++l) {
    auto train = sample_poisson_process(rate, t2, RngState{rng.seed, derive_stream(rng.stream_id, l)});
    cb.fingerprints.push_back(Fingerprint{l, std::move(train.timestamps)});
  }
  return cb;
}

/// Rescale a codeword built at lambda_min for a flow of rate lambda_i: every
/// delay is multiplied by lambda_min / lambda_i.
inline Fingerprint scale_fingerprint(const Fingerprint& fp, double lambda_min, double lambda_i) {
  detail::require(std::isfinite(lambda_min) && std::isfinite(lambda_i) && lambda_min > 0.0 &&
                      lambda_i > 0.0,
                  "scale_fingerprint: rates must be positive");
  detail::require(lambda_min <= lambda_i, "scale_fingerprint: lambda_min must not exceed lambda_i");
  if (lambda_min == lambda_i) return fp;
  const double factor = lambda_min / lambda_i;
  Fingerprint out{fp.index, fp.offsets};
  for (auto& o : out.offsets) o *= factor;
  return out;
}

// ---------------------------------------------------------------------------
// Binary format (all integers and doubles little-endian):
//   magic "FLOWPCB\0" | u32 version | u32 reserved(0) | u64 m | f64 rate | f64 T2
//   m x { u64 index | u64 count | count x f64 offset }
// ---------------------------------------------------------------------------

inline constexpr std::string_view kCodebookMagic{"FLOWPCB\0", 8};
inline constexpr std::uint32_t kCodebookVersion = 1;

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint64_t u64() { return read_le(8); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(read_le(4)); }
  double f64() { return std::bit_cast<double>(u64()); }

  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const noexcept { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError("codebook file truncated");
  }

  std::uint64_t read_le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_codebook(const Codebook& cb) {
  std::string out;
  out.append(kCodebookMagic);
  detail::put_u32(out, kCodebookVersion);
  detail::put_u32(out, 0);
  detail::put_u64(out, cb.fingerprints.size());
  detail::put_f64(out, cb.rate);
  detail::put_f64(out, cb.t2);
  for (const auto& fp : cb.fingerprints) {
    detail::put_u64(out, fp.index);
    detail::put_u64(out, fp.offsets.size());
    for (double o : fp.offsets) detail::put_f64(out, o);
  }
  return out;
}

inline Codebook decode_codebook(std::string_view bytes) {
  detail::ByteReader in(bytes);
  if (in.remaining() < kCodebookMagic.size() || in.bytes(kCodebookMagic.size()) != kCodebookMagic) {
    throw FormatError("not a codebook file (bad magic)");
  }
  const auto version = in.u32();
  if (version != kCodebookVersion) {
    throw FormatError("unsupported codebook version " + std::to_string(version));
  }
  in.u32();
  const auto m = in.u64();
  Codebook cb;
  cb.rate = in.f64();
  cb.t2 = in.f64();
  // Each fingerprint needs at least 16 bytes; rejects absurd counts early.
  if (m > in.remaining() / 16) throw FormatError("codebook file truncated");
  cb.fingerprints.reserve(m);
  for (std::uint64_t l = 0; l < m; ++l) {
    Fingerprint fp;
    fp.index = in.u64();
    const auto n = in.u64();
    if (n > in.remaining() / 8) throw FormatError("codebook file truncated");
    fp.offsets.resize(n);
    for (auto& o : fp.offsets) o = in.f64();
    cb.fingerprints.push_back(std::move(fp));
  }
  if (in.remaining() != 0) throw FormatError("trailing bytes after codebook");
  cb.validate();
  return cb;
}

inline void save_codebook(const Codebook& cb, const std::filesystem::path& path) {
  cb.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  const auto bytes = encode_codebook(cb);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

inline Codebook load_codebook(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return decode_codebook(bytes);
}

/// Diagnostic text export: one line per fingerprint, "index: o1 o2 ...".
inline void export_codebook_text(const Codebook& cb, std::ostream& out) {
  char buf[32];
  out << "# rate " << cb.rate << " T2 " << cb.t2 << " m " << cb.size() << '\n';
  for (const auto& fp : cb.fingerprints) {
    out << fp.index << ':';
    for (double o : fp.offsets) {
      std::snprintf(buf, sizeof buf, " %.17g", o);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace flowprint
