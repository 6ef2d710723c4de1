// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container:
//   8 bytes   "VOXDET1\0"
//   8 bytes   manifest length L, little-endian u64
//   L bytes   JSON manifest: config text, anchors, cube side, and per tensor
//             {name, shape, dtype "float32", offset, nbytes, crc32}
//   payload   raw little-endian float32 tensors at the listed offsets
#pragma once

#include <zlib.h>

#include <bit>
#include <nlohmann/json.hpp>

#include "voxdet/model.hpp"
#include "voxdet/nifti.hpp"

namespace voxdet {

inline constexpr char kCheckpointMagic[8] = {'V', 'O', 'X', 'D', 'E', 'T', '1', '\0'};

struct CheckpointInfo {
  std::int64_t cube_side = 0;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();  // free-form (epoch, fitness, ...)
};

namespace detail {

inline void put_f32(std::vector<unsigned char>& out, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<unsigned char>(bits >> (8 * b)));
}

inline float get_f32(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[b]) << (8 * b);
  return std::bit_cast<float>(bits);
}

struct NamedArray {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<float>* values;
};

template <typename T>
std::vector<NamedArray> model_arrays(Model<T>& model, std::vector<std::vector<float>>& scratch) {
  std::vector<NamedArray> out;
  auto params = model.params();
  auto buffers = model.buffers();
  scratch.clear();
  scratch.reserve(params.size() + buffers.size());
  for (auto* p : params) {
    scratch.emplace_back(p->value.begin(), p->value.end());
    out.push_back({p->name, p->shape, &scratch.back()});
  }
  for (auto& b : buffers) {
    scratch.emplace_back(b.values->begin(), b.values->end());
    out.push_back({b.name, {static_cast<std::int64_t>(b.values->size())}, &scratch.back()});
  }
  return out;
}

}  // namespace detail

template <typename T>
std::vector<unsigned char> encode_checkpoint(Model<T>& model, const CheckpointInfo& info) {
  using J = nlohmann::ordered_json;
  std::vector<std::vector<float>> scratch;
  const auto arrays = detail::model_arrays(model, scratch);
  std::vector<unsigned char> payload;
  J tensors = J::array();
  for (const auto& a : arrays) {
    const std::size_t offset = payload.size();
    for (float v : *a.values) detail::put_f32(payload, v);
    const std::size_t nbytes = payload.size() - offset;
    const auto crc = crc32(0L, payload.data() + offset, static_cast<uInt>(nbytes));
    tensors.push_back(J{{"name", a.name}, {"shape", a.shape}, {"dtype", "float32"}, {"offset", offset},
                        {"nbytes", nbytes}, {"crc32", crc}});
  }
  J anchors = J::array();
  for (const auto& e : model.anchors().anchors) anchors.push_back(e);
  J manifest{{"format", "VOXDET1"},
             {"config", model.spec().text},
             {"cube_side", info.cube_side},
             {"anchors", anchors},
             {"per_scale", model.anchors().per_scale},
             {"tensors", tensors},
             {"meta", info.meta}};
  const std::string text = manifest.dump();
  std::vector<unsigned char> out(kCheckpointMagic, kCheckpointMagic + 8);
  const auto len = static_cast<std::uint64_t>(text.size());
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<unsigned char>(len >> (8 * b)));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

template <typename T>
void save_checkpoint(Model<T>& model, const CheckpointInfo& info, const std::filesystem::path& path) {
  nifti::detail::write_file(path, encode_checkpoint(model, info));
}

template <typename T = float>
struct LoadedCheckpoint {
  std::unique_ptr<Model<T>> model;
  CheckpointInfo info;
};

// Rebuilds the model from the embedded config and verifies every tensor
// (presence, shape, size, CRC) against it. Any inconsistency is CheckpointMismatch.
template <typename T = float>
LoadedCheckpoint<T> decode_checkpoint(const std::vector<unsigned char>& bytes) {
  auto fail = [](const std::string& why) { return Error(Errc::CheckpointMismatch, why); };
  if (bytes.size() < 16 || !std::equal(kCheckpointMagic, kCheckpointMagic + 8, bytes.begin()))
    throw fail("not a VOXDET1 checkpoint");
  std::uint64_t len = 0;
  for (int b = 0; b < 8; ++b) len |= static_cast<std::uint64_t>(bytes[8 + static_cast<std::size_t>(b)]) << (8 * b);
  if (len > bytes.size() - 16) throw fail("manifest length exceeds file size");
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(len));
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("manifest: ") + e.what());
  }
  const std::size_t base = 16 + static_cast<std::size_t>(len);
  LoadedCheckpoint<T> out;
  try {
    ModelSpec spec = parse_model_config(m.at("config").get<std::string>());
    AnchorSet anchors;
    for (const auto& a : m.at("anchors")) anchors.anchors.push_back(a.get<Extent3>());
    anchors.per_scale = m.at("per_scale").get<std::vector<int>>();
    out.info.cube_side = m.at("cube_side").get<std::int64_t>();
    if (m.contains("meta")) out.info.meta = m.at("meta");
    out.model = std::make_unique<Model<T>>(std::move(spec), 0, false);
    out.model->set_anchors(std::move(anchors));

    std::map<std::string, const nlohmann::json*> entries;
    for (const auto& t : m.at("tensors")) entries[t.at("name").get<std::string>()] = &t;
    auto load = [&](const std::string& name, const std::vector<std::int64_t>& shape, auto& dst) {
      auto it = entries.find(name);
      if (it == entries.end()) throw fail("missing tensor " + name);
      const auto& t = *it->second;
      if (t.at("dtype").get<std::string>() != "float32") throw fail(name + ": unsupported dtype");
      if (t.at("shape").get<std::vector<std::int64_t>>() != shape) throw fail(name + ": shape mismatch");
      const auto off = t.at("offset").get<std::size_t>(), nbytes = t.at("nbytes").get<std::size_t>();
      if (nbytes != dst.size() * 4 || off > bytes.size() - base || nbytes > bytes.size() - base - off)
        throw fail(name + ": payload out of range");
      const unsigned char* p = bytes.data() + base + off;
      if (crc32(0L, p, static_cast<uInt>(nbytes)) != t.at("crc32").get<std::uint64_t>())
        throw fail(name + ": checksum mismatch");
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(detail::get_f32(p + 4 * i));
      entries.erase(it);
    };
    for (auto* p : out.model->params()) load(p->name, p->shape, p->value);
    for (auto& b : out.model->buffers()) load(b.name, {static_cast<std::int64_t>(b.values->size())}, *b.values);
    if (!entries.empty()) throw fail("unexpected tensor " + entries.begin()->first);
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("manifest: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::CheckpointMismatch) throw;
    throw fail(e.what());
  }
  out.model->mark_initialized();
  return out;
}

template <typename T = float>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::vector<unsigned char> bytes;
  try {
    bytes = nifti::detail::read_file(path);
  } catch (const Error& e) {
    throw Error(Errc::CheckpointMismatch, e.what());
  }
  return decode_checkpoint<T>(bytes);
}

}  // namespace voxdet
