// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0
//
// Archive layout: 9-byte magic, little-endian u64 header length, JSON
// header listing tensor names and shapes, then raw float64 payloads in
// header order.

#include "olaf/nn/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "olaf/core/error.hpp"

namespace olaf::nn {

namespace {

constexpr char kMagic[9] = {'O', 'L', 'A', 'F', 'C', 'K', 'P', 'T', '\x01'};

} // namespace

const Tensor *Checkpoint::find(const std::string &name) const {
  for (const auto &[n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

Checkpoint snapshot(Module &m, nlohmann::json meta) {
  Checkpoint ck;
  ck.meta = std::move(meta);
  for (const auto &[name, v] : m.named_parameters())
    ck.tensors.emplace_back(name, v.value());
  for (const auto &[name, t] : m.named_buffers())
    ck.tensors.emplace_back(name, *t);
  return ck;
}

void restore(Module &m, const Checkpoint &ck) {
  size_t expected = 0;
  auto pull = [&](const std::string &name, Tensor &dst) {
    const Tensor *src = ck.find(name);
    OLAF_CHECK(src, DataError, "checkpoint is missing tensor '%s'",
               name.c_str());
    OLAF_CHECK(src->shape() == dst.shape(), DataError,
               "checkpoint tensor '%s' has shape %s, model expects %s",
               name.c_str(), shape_str(src->shape()).c_str(),
               shape_str(dst.shape()).c_str());
    dst = *src;
    ++expected;
  };
  for (auto &[name, v] : m.named_parameters()) pull(name, v.value());
  for (auto &[name, t] : m.named_buffers()) pull(name, *t);
  OLAF_CHECK(expected == ck.tensors.size(), DataError,
             "checkpoint holds %lld tensors, model has %lld",
             static_cast<long long>(ck.tensors.size()),
             static_cast<long long>(expected));
}

void save_checkpoint(const std::string &path, const Checkpoint &ck) {
  nlohmann::json header;
  header["meta"] = ck.meta;
  header["tensors"] = nlohmann::json::array();
  for (const auto &[name, t] : ck.tensors)
    header["tensors"].push_back({{"name", name}, {"shape", t.shape()}});
  const std::string head = header.dump();

  std::ofstream out(path, std::ios::binary);
  OLAF_CHECK(out.good(), DataError, "cannot write checkpoint '%s'",
             path.c_str());
  out.write(kMagic, sizeof(kMagic));
  const uint64_t head_len = head.size();
  out.write(reinterpret_cast<const char *>(&head_len), sizeof(head_len));
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  for (const auto &[name, t] : ck.tensors)
    out.write(reinterpret_cast<const char *>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(double)));
  out.flush();
  OLAF_CHECK(out.good(), DataError, "short write to checkpoint '%s'",
             path.c_str());
}

Checkpoint load_checkpoint(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  OLAF_CHECK(in.good(), DataError, "cannot open checkpoint '%s'",
             path.c_str());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  OLAF_CHECK(in.gcount() == sizeof(magic) &&
                 std::memcmp(magic, kMagic, sizeof(kMagic)) == 0,
             DataError, "'%s' is not a checkpoint archive", path.c_str());
  uint64_t head_len = 0;
  in.read(reinterpret_cast<char *>(&head_len), sizeof(head_len));
  OLAF_CHECK(in.good() && head_len > 0 && head_len < (1ull << 30), DataError,
             "corrupt checkpoint header in '%s'", path.c_str());
  std::string head(head_len, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head_len));
  OLAF_CHECK(in.gcount() == static_cast<std::streamsize>(head_len), DataError,
             "truncated checkpoint header in '%s'", path.c_str());

  nlohmann::json header = nlohmann::json::parse(head, nullptr, false);
  OLAF_CHECK(!header.is_discarded() && header.contains("tensors"), DataError,
             "unparseable checkpoint header in '%s'", path.c_str());

  Checkpoint ck;
  ck.meta = header.value("meta", nlohmann::json::object());
  for (const auto &entry : header["tensors"]) {
    const std::string name = entry.at("name").get<std::string>();
    Shape shape = entry.at("shape").get<Shape>();
    Tensor t(shape);
    in.read(reinterpret_cast<char *>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    OLAF_CHECK(in.gcount() ==
                   static_cast<std::streamsize>(t.numel() * sizeof(double)),
               DataError, "truncated tensor '%s' in '%s'", name.c_str(),
               path.c_str());
    ck.tensors.emplace_back(name, std::move(t));
  }
  in.peek();
  OLAF_CHECK(in.eof(), DataError, "trailing bytes in checkpoint '%s'",
             path.c_str());
  return ck;
}

} // namespace olaf::nn
