#pragma once

// Training data container and its columnar binary file format:
//   magic "RMDS" | u32 version | u64 header length | header JSON |
//   features f32 | labels u8 | episode u32 | step u32 |
//   train indices u32 | validation indices u32 | fnv1a64 checksum
// The header records every dimension, so truncation and corruption are both
// detected before any block is trusted.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "railmpc/util.hpp"

namespace railmpc {

struct Dataset {
  int feature_dim = 0;   // flattened learning-state dimension
  int x_dim = 0;         // leading |x| entries of each record
  int n_platforms = 0;
  int segments = 0;      // per-platform flow entries (sequence length)
  int heads = 0;         // label slots per record
  int classes = 0;       // composition choices per head
  int units_min = 1;     // composition encoded as class id + units_min

  std::vector<std::vector<float>> features;        // [record][feature_dim]
  std::vector<std::vector<std::uint8_t>> labels;   // [record][heads]
  std::vector<std::uint32_t> episode;              // provenance
  std::vector<std::uint32_t> step;
  std::vector<std::uint32_t> train_indices;
  std::vector<std::uint32_t> valid_indices;

  std::size_t size() const { return features.size(); }

  // Payload bytes of one record as stored on disk.
  std::size_t record_bytes() const {
    return static_cast<std::size_t>(feature_dim) * sizeof(float) +
           static_cast<std::size_t>(heads) * sizeof(std::uint8_t) + 2 * sizeof(std::uint32_t);
  }

  std::size_t payload_bytes() const { return size() * record_bytes(); }

  void push_record(const std::vector<double>& feature_vec, const std::vector<int>& label_vec,
                   std::uint32_t ep, std::uint32_t st) {
    if (static_cast<int>(feature_vec.size()) != feature_dim)
      throw std::invalid_argument("record feature dimension mismatch");
    if (static_cast<int>(label_vec.size()) != heads)
      throw std::invalid_argument("record label count mismatch");
    std::vector<float> f(feature_vec.begin(), feature_vec.end());
    std::vector<std::uint8_t> l;
    l.reserve(label_vec.size());
    for (int v : label_vec) {
      int cls = v - units_min;
      if (cls < 0 || cls >= classes) throw std::invalid_argument("label outside class range");
      l.push_back(static_cast<std::uint8_t>(cls));
    }
    features.push_back(std::move(f));
    labels.push_back(std::move(l));
    episode.push_back(ep);
    step.push_back(st);
  }

  // Deterministic split: every holdout-th record validates, the rest train.
  void assign_split(int holdout_every = 5) {
    train_indices.clear();
    valid_indices.clear();
    for (std::size_t i = 0; i < size(); ++i) {
      if (holdout_every > 0 && i % static_cast<std::size_t>(holdout_every) ==
                                   static_cast<std::size_t>(holdout_every) - 1)
        valid_indices.push_back(static_cast<std::uint32_t>(i));
      else
        train_indices.push_back(static_cast<std::uint32_t>(i));
    }
  }
};

namespace detail {

template <typename T>
void put_raw(std::string& out, const T* data, std::size_t count) {
  out.append(reinterpret_cast<const char*>(data), count * sizeof(T));
}

template <typename T>
void get_raw(const std::string& in, std::size_t& pos, T* data, std::size_t count) {
  std::size_t bytes = count * sizeof(T);
  if (pos + bytes > in.size()) throw FileFormatError("file truncated");
  std::memcpy(data, in.data() + pos, bytes);
  pos += bytes;
}

}  // namespace detail

inline std::string dataset_to_bytes(const Dataset& ds) {
  nlohmann::json header;
  header["feature_dim"] = ds.feature_dim;
  header["x_dim"] = ds.x_dim;
  header["n_platforms"] = ds.n_platforms;
  header["segments"] = ds.segments;
  header["heads"] = ds.heads;
  header["classes"] = ds.classes;
  header["units_min"] = ds.units_min;
  header["n_records"] = ds.size();
  header["n_train"] = ds.train_indices.size();
  header["n_valid"] = ds.valid_indices.size();
  std::string htext = header.dump();

  std::string out = "RMDS";
  std::uint32_t version = 1;
  detail::put_raw(out, &version, 1);
  std::uint64_t hlen = htext.size();
  detail::put_raw(out, &hlen, 1);
  out += htext;
  for (const auto& f : ds.features) detail::put_raw(out, f.data(), f.size());
  for (const auto& l : ds.labels) detail::put_raw(out, l.data(), l.size());
  detail::put_raw(out, ds.episode.data(), ds.episode.size());
  detail::put_raw(out, ds.step.data(), ds.step.size());
  detail::put_raw(out, ds.train_indices.data(), ds.train_indices.size());
  detail::put_raw(out, ds.valid_indices.data(), ds.valid_indices.size());
  std::uint64_t sum = fnv1a64(out.data() + 4, out.size() - 4);
  detail::put_raw(out, &sum, 1);
  return out;
}

inline Dataset dataset_from_bytes(const std::string& in) {
  if (in.size() < 4 + sizeof(std::uint32_t) + sizeof(std::uint64_t) + sizeof(std::uint64_t) ||
      in.compare(0, 4, "RMDS") != 0)
    throw FileFormatError("not a dataset file");
  std::uint64_t stored;
  std::memcpy(&stored, in.data() + in.size() - sizeof(std::uint64_t), sizeof(std::uint64_t));
  if (fnv1a64(in.data() + 4, in.size() - 4 - sizeof(std::uint64_t)) != stored)
    throw FileFormatError("dataset checksum mismatch (corrupt or truncated file)");
  std::size_t pos = 4;
  std::uint32_t version = 0;
  detail::get_raw(in, pos, &version, 1);
  if (version != 1) throw FileFormatError("unsupported dataset version");
  std::uint64_t hlen = 0;
  detail::get_raw(in, pos, &hlen, 1);
  if (pos + hlen > in.size()) throw FileFormatError("file truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.substr(pos, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FileFormatError(std::string("dataset header malformed: ") + e.what());
  }
  pos += hlen;
  Dataset ds;
  ds.feature_dim = header.at("feature_dim").get<int>();
  ds.x_dim = header.at("x_dim").get<int>();
  ds.n_platforms = header.at("n_platforms").get<int>();
  ds.segments = header.at("segments").get<int>();
  ds.heads = header.at("heads").get<int>();
  ds.classes = header.at("classes").get<int>();
  ds.units_min = header.at("units_min").get<int>();
  std::size_t n = header.at("n_records").get<std::size_t>();
  ds.features.assign(n, std::vector<float>(static_cast<std::size_t>(ds.feature_dim)));
  for (auto& f : ds.features) detail::get_raw(in, pos, f.data(), f.size());
  ds.labels.assign(n, std::vector<std::uint8_t>(static_cast<std::size_t>(ds.heads)));
  for (auto& l : ds.labels) detail::get_raw(in, pos, l.data(), l.size());
  ds.episode.resize(n);
  detail::get_raw(in, pos, ds.episode.data(), n);
  ds.step.resize(n);
  detail::get_raw(in, pos, ds.step.data(), n);
  ds.train_indices.resize(header.at("n_train").get<std::size_t>());
  detail::get_raw(in, pos, ds.train_indices.data(), ds.train_indices.size());
  ds.valid_indices.resize(header.at("n_valid").get<std::size_t>());
  detail::get_raw(in, pos, ds.valid_indices.data(), ds.valid_indices.size());
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileFormatError("cannot open for writing: " + path);
  std::string bytes = dataset_to_bytes(ds);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileFormatError("cannot open dataset file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return dataset_from_bytes(bytes);
}

}  // namespace railmpc
