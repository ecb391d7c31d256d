// dvbx/binary_io.hpp

// Copyright 2026 The DVBx Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Little-endian primitives shared by the binary container formats, plus
// atomic file replacement (write to a temporary, then rename).

#ifndef DVBX_BINARY_IO_HPP_
#define DVBX_BINARY_IO_HPP_

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "dvbx/common.hpp"

namespace dvbx::io {

/// Every container starts with 8 magic bytes followed by a u32 version and a
/// u32 reserved word (zero), 16 bytes in total.
inline constexpr std::size_t kHeaderSize = 16;

class ByteWriter {
 public:
  void U32(std::uint32_t v) { PutLE(v, 4); }
  void U64(std::uint64_t v) { PutLE(v, 8); }
  void F64(double v) { PutLE(std::bit_cast<std::uint64_t>(v), 8); }
  void F32(float v) { PutLE(std::bit_cast<std::uint32_t>(v), 4); }
  void Bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  void Header(std::string_view magic, std::uint32_t version) {
    if (magic.size() != 8) throw Error("magic must be 8 bytes");
    Bytes(magic);
    U32(version);
    U32(0);
  }

  /// u64 length followed by raw UTF-8 bytes.
  void String(std::string_view s) {
    U64(s.size());
    Bytes(s);
  }

  /// Row-major doubles, no shape prefix.
  void MatrixF64(const Matrix &m) {
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) F64(m(r, c));
  }

  const std::vector<char> &buffer() const { return buf_; }

 private:
  void PutLE(std::uint64_t v, int nbytes) {
    for (int i = 0; i < nbytes; ++i)
      buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> data, std::string what)
      : data_(std::move(data)), what_(std::move(what)) {}

  std::uint32_t U32() { return static_cast<std::uint32_t>(GetLE(4)); }
  std::uint64_t U64() { return GetLE(8); }
  double F64() { return std::bit_cast<double>(GetLE(8)); }
  float F32() { return std::bit_cast<float>(static_cast<std::uint32_t>(GetLE(4))); }

  std::string Bytes(std::size_t n) {
    Need(n);
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  /// Checks magic and returns the version.
  std::uint32_t Header(std::string_view magic) {
    if (data_.size() < kHeaderSize) Fail("truncated header");
    if (Bytes(8) != magic) Fail("bad magic");
    const std::uint32_t version = U32();
    if (U32() != 0) Fail("bad reserved header word");
    return version;
  }

  std::string String() {
    const std::uint64_t n = U64();
    if (n > remaining()) Fail("string length exceeds payload");
    return Bytes(static_cast<std::size_t>(n));
  }

  Matrix MatrixF64(Index rows, Index cols) {
    NeedCount(rows, cols, 8);
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) m(r, c) = F64();
    return m;
  }

  /// Fails unless rows*cols*elem_size bytes remain.
  void NeedCount(std::uint64_t rows, std::uint64_t cols, std::uint64_t elem) {
    if (cols != 0 && rows > remaining() / cols / elem)
      Fail("declared shape inconsistent with payload size");
  }

  std::size_t remaining() const { return data_.size() - pos_; }

  void ExpectEnd() {
    if (remaining() != 0) Fail("trailing bytes after payload");
  }

  [[noreturn]] void Fail(const std::string &msg) const {
    throw FormatError(what_ + ": " + msg);
  }

 private:
  void Need(std::size_t n) {
    if (n > remaining()) Fail("truncated payload");
  }
  std::uint64_t GetLE(int nbytes) {
    Need(static_cast<std::size_t>(nbytes));
    std::uint64_t v = 0;
    for (int i = 0; i < nbytes; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i]))
           << (8 * i);
    pos_ += static_cast<std::size_t>(nbytes);
    return v;
  }

  std::vector<char> data_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::vector<char> ReadFileBytes(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string ReadFileText(const std::filesystem::path &path) {
  const auto bytes = ReadFileBytes(path);
  return {bytes.begin(), bytes.end()};
}

/// Writes through a sibling temporary file and renames it into place.
inline void WriteFileAtomic(const std::filesystem::path &path,
                            std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void WriteFileAtomic(const std::filesystem::path &path,
                            const std::vector<char> &bytes) {
  WriteFileAtomic(path, std::string_view(bytes.data(), bytes.size()));
}

}  // namespace dvbx::io

#endif  // DVBX_BINARY_IO_HPP_
