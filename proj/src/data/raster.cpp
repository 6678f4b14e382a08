// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary PGM/PPM readers and writers. 16-bit PGM samples are big-endian
// per the netpbm convention.

#include <algorithm>
#include <cctype>
#include <fstream>

#include "olaf/core/error.hpp"
#include "olaf/data.hpp"

namespace olaf::data {

namespace {

struct PnmHeader {
  std::string magic;
  int64_t w = 0, h = 0, maxval = 0;
};

/// Reads one whitespace-delimited token, skipping '#' comment lines.
std::string next_token(std::istream &in) {
  std::string tok;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  return tok;
}

PnmHeader read_header(std::istream &in, const std::string &path,
                      const char *expect_magic) {
  PnmHeader hd;
  hd.magic = next_token(in);
  OLAF_CHECK(hd.magic == expect_magic, DataError,
             "'%s': expected %s raster, found magic '%s'", path.c_str(),
             expect_magic, hd.magic.c_str());
  try {
    hd.w = std::stoll(next_token(in));
    hd.h = std::stoll(next_token(in));
    hd.maxval = std::stoll(next_token(in));
  } catch (const std::exception &) {
    throw DataError(strfmt("'%s': malformed raster header", path.c_str()));
  }
  OLAF_CHECK(hd.w > 0 && hd.h > 0 && hd.maxval > 0 && hd.maxval < 65536,
             DataError, "'%s': bad raster geometry %lldx%lld maxval %lld",
             path.c_str(), static_cast<long long>(hd.w),
             static_cast<long long>(hd.h), static_cast<long long>(hd.maxval));
  return hd;
}

std::vector<uint8_t> read_payload(std::istream &in, const std::string &path,
                                  size_t bytes) {
  std::vector<uint8_t> buf(bytes);
  in.read(reinterpret_cast<char *>(buf.data()),
          static_cast<std::streamsize>(bytes));
  OLAF_CHECK(in.gcount() == static_cast<std::streamsize>(bytes), DataError,
             "'%s': truncated raster payload", path.c_str());
  return buf;
}

std::ofstream open_out(const std::string &path) {
  std::ofstream out(path, std::ios::binary);
  OLAF_CHECK(out.good(), DataError, "cannot write '%s'", path.c_str());
  return out;
}

std::ifstream open_in(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  OLAF_CHECK(in.good(), DataError, "cannot open '%s'", path.c_str());
  return in;
}

} // namespace

void save_label_pgm(const std::string &path, const LabelMap &m) {
  int32_t peak = 0;
  for (int32_t x : m.v) peak = std::max(peak, x);
  const bool wide = peak > 255;
  auto out = open_out(path);
  out << "P5\n" << m.w << " " << m.h << "\n" << (wide ? 65535 : 255) << "\n";
  if (wide) {
    for (int32_t x : m.v) {
      out.put(static_cast<char>((x >> 8) & 0xff));
      out.put(static_cast<char>(x & 0xff));
    }
  } else {
    for (int32_t x : m.v) out.put(static_cast<char>(x & 0xff));
  }
  OLAF_CHECK(out.good(), DataError, "short write to '%s'", path.c_str());
}

LabelMap load_label_pgm(const std::string &path) {
  auto in = open_in(path);
  PnmHeader hd = read_header(in, path, "P5");
  LabelMap m(hd.h, hd.w);
  const size_t px = static_cast<size_t>(hd.w * hd.h);
  if (hd.maxval > 255) {
    auto buf = read_payload(in, path, px * 2);
    for (size_t i = 0; i < px; ++i)
      m.v[i] = static_cast<int32_t>((buf[2 * i] << 8) | buf[2 * i + 1]);
  } else {
    auto buf = read_payload(in, path, px);
    for (size_t i = 0; i < px; ++i) m.v[i] = buf[i];
  }
  return m;
}

void save_mask_pgm(const std::string &path, const Mask &m) {
  auto out = open_out(path);
  out << "P5\n" << m.w << " " << m.h << "\n255\n";
  for (uint8_t b : m.v) out.put(b ? '\xff' : '\0');
  OLAF_CHECK(out.good(), DataError, "short write to '%s'", path.c_str());
}

Mask load_mask_pgm(const std::string &path) {
  auto in = open_in(path);
  PnmHeader hd = read_header(in, path, "P5");
  OLAF_CHECK(hd.maxval <= 255, DataError, "'%s': mask raster must be 8-bit",
             path.c_str());
  Mask m(hd.h, hd.w);
  auto buf = read_payload(in, path, static_cast<size_t>(hd.w * hd.h));
  for (size_t i = 0; i < buf.size(); ++i) m.v[i] = buf[i] ? 1 : 0;
  return m;
}

void save_ppm(const std::string &path, const RgbImage &img) {
  auto out = open_out(path);
  out << "P6\n" << img.w << " " << img.h << "\n255\n";
  for (int64_t i = 0; i < img.h; ++i)
    for (int64_t j = 0; j < img.w; ++j)
      for (int64_t c = 0; c < 3; ++c) {
        const double x = std::clamp(img.at(c, i, j), 0.0, 1.0);
        out.put(static_cast<char>(static_cast<int>(x * 255.0 + 0.5)));
      }
  OLAF_CHECK(out.good(), DataError, "short write to '%s'", path.c_str());
}

RgbImage load_ppm(const std::string &path) {
  auto in = open_in(path);
  PnmHeader hd = read_header(in, path, "P6");
  OLAF_CHECK(hd.maxval == 255, DataError, "'%s': expected 8-bit PPM",
             path.c_str());
  RgbImage img(hd.h, hd.w);
  auto buf = read_payload(in, path, static_cast<size_t>(hd.w * hd.h * 3));
  size_t k = 0;
  for (int64_t i = 0; i < hd.h; ++i)
    for (int64_t j = 0; j < hd.w; ++j)
      for (int64_t c = 0; c < 3; ++c)
        img.at(c, i, j) = static_cast<double>(buf[k++]) / 255.0;
  return img;
}

} // namespace olaf::data
