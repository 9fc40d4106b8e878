// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "cap/graph.hpp"

namespace cap {

// Binary checkpoint container. Layout (all integers little-endian):
//   magic "CAPCKPT1", u32 version,
//   sections, each: 4-byte tag, u64 payload size, payload.
// Tags: CONF (u64 fingerprint, u32 len, config JSON), STEP (u64),
//       PARM / ADMM / ADMV (tensor blocks), RNGS (text engine state).
// Tensor block: u32 count; per tensor u16 name length, name, u8 dtype
// (4 = f32, 8 = f64), u64 rows, u64 cols, column-major payload.
template <typename T>
struct Checkpoint {
  std::uint64_t step = 0;
  std::uint64_t fingerprint = 0;
  std::string config_json;
  ParamStore<T> store;
  std::string rng_state;
};

namespace ckpt_detail {

inline void put_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
template <typename U>
void put_int(std::ostream& out, U v) {
  unsigned char b[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i)
    b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  put_bytes(out, b, sizeof(U));
}
template <typename U>
U get_int(std::istream& in) {
  unsigned char b[sizeof(U)];
  in.read(reinterpret_cast<char*>(b), sizeof(U));
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= U(b[i]) << (8 * i);
  return v;
}

template <typename T>
void put_tensors(std::ostream& out,
                 const std::vector<typename ParamStore<T>::Entry>& entries,
                 Matrix<T> ParamStore<T>::Entry::* field) {
  put_int<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put_int<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
    put_bytes(out, e.name.data(), e.name.size());
    put_int<std::uint8_t>(out, static_cast<std::uint8_t>(sizeof(T)));
    const Matrix<T>& m = e.*field;
    put_int<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put_int<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    put_bytes(out, m.data(), sizeof(T) * m.size());
  }
}

template <typename T>
void get_tensors(std::istream& in, ParamStore<T>& store,
                 Matrix<T> ParamStore<T>::Entry::* field,
                 bool create) {
  const auto count = get_int<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto nlen = get_int<std::uint16_t>(in);
    std::string name(nlen, '\0');
    in.read(name.data(), nlen);
    const auto dtype = get_int<std::uint8_t>(in);
    if (dtype != sizeof(T)) throw Error("checkpoint: dtype mismatch");
    const auto rows = static_cast<Eigen::Index>(get_int<std::uint64_t>(in));
    const auto cols = static_cast<Eigen::Index>(get_int<std::uint64_t>(in));
    if (create) store.add(name, rows, cols);
    Matrix<T>& m = store[name].*field;
    if (m.rows() != rows || m.cols() != cols)
      throw Error("checkpoint: shape mismatch for " + name);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(T) * m.size()));
  }
}

inline void put_section(std::ostream& out, const char tag[5],
                        const std::string& payload) {
  put_bytes(out, tag, 4);
  put_int<std::uint64_t>(out, payload.size());
  put_bytes(out, payload.data(), payload.size());
}

}  // namespace ckpt_detail

template <typename T>
void save_checkpoint(const std::string& path, const Checkpoint<T>& ckpt) {
  using namespace ckpt_detail;
  std::ostringstream body;

  std::ostringstream conf;
  put_int<std::uint64_t>(conf, ckpt.fingerprint);
  put_int<std::uint32_t>(conf, static_cast<std::uint32_t>(ckpt.config_json.size()));
  put_bytes(conf, ckpt.config_json.data(), ckpt.config_json.size());
  put_section(body, "CONF", conf.str());

  std::ostringstream step;
  put_int<std::uint64_t>(step, ckpt.step);
  put_section(body, "STEP", step.str());

  std::ostringstream parm, admm, admv;
  put_tensors<T>(parm, ckpt.store.entries(), &ParamStore<T>::Entry::value);
  put_tensors<T>(admm, ckpt.store.entries(), &ParamStore<T>::Entry::m);
  put_tensors<T>(admv, ckpt.store.entries(), &ParamStore<T>::Entry::v);
  put_section(body, "PARM", parm.str());
  put_section(body, "ADMM", admm.str());
  put_section(body, "ADMV", admv.str());

  put_section(body, "RNGS", ckpt.rng_state);

  const std::string tmp = path + ".tmp";
  std::ofstream out(tmp, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint: " + path);
  out.write("CAPCKPT1", 8);
  put_int<std::uint32_t>(out, 1);
  const std::string b = body.str();
  put_bytes(out, b.data(), b.size());
  out.close();
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw Error("cannot finalize checkpoint: " + path);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path,
                              std::uint64_t expected_fingerprint = 0) {
  using namespace ckpt_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path);
  char magic[9] = {};
  in.read(magic, 8);
  if (std::strncmp(magic, "CAPCKPT1", 8) != 0)
    throw Error("bad checkpoint magic: " + path);
  const auto version = get_int<std::uint32_t>(in);
  if (version != 1) throw Error("unsupported checkpoint version");

  Checkpoint<T> ckpt;
  bool have_params = false;
  while (true) {
    char tag[5] = {};
    in.read(tag, 4);
    if (!in || in.gcount() < 4) break;
    const auto size = get_int<std::uint64_t>(in);
    const std::streampos next = in.tellg() + static_cast<std::streamoff>(size);
    const std::string t(tag, 4);
    if (t == "CONF") {
      ckpt.fingerprint = get_int<std::uint64_t>(in);
      const auto len = get_int<std::uint32_t>(in);
      ckpt.config_json.resize(len);
      in.read(ckpt.config_json.data(), len);
    } else if (t == "STEP") {
      ckpt.step = get_int<std::uint64_t>(in);
    } else if (t == "PARM") {
      get_tensors<T>(in, ckpt.store, &ParamStore<T>::Entry::value, true);
      have_params = true;
    } else if (t == "ADMM") {
      get_tensors<T>(in, ckpt.store, &ParamStore<T>::Entry::m, false);
    } else if (t == "ADMV") {
      get_tensors<T>(in, ckpt.store, &ParamStore<T>::Entry::v, false);
    } else if (t == "RNGS") {
      ckpt.rng_state.resize(size);
      in.read(ckpt.rng_state.data(), static_cast<std::streamsize>(size));
    }
    in.seekg(next);
  }
  if (!have_params) throw Error("checkpoint missing parameters: " + path);
  if (expected_fingerprint != 0 && ckpt.fingerprint != expected_fingerprint)
    throw Error("checkpoint fingerprint does not match run config");
  return ckpt;
}

inline std::string rng_to_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline Rng rng_from_string(const std::string& s) {
  Rng rng;
  std::istringstream is(s);
  is >> rng;
  return rng;
}

}  // namespace cap
