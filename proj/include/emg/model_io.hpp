#pragma once

// model.bin: everything `eval` and `predict` need to reproduce a trained
// model's outputs bit-for-bit.
//
//   bytes 0..7     magic "EMGCNN\0\1"
//   u32            format version
//   u64            length of the JSON metadata block
//   ...            JSON metadata (network spec, feature config, sample rate, ...)
//   f64 * 4*nbins  normaliser: mean1, std1, mean2, std2
//   f64 * P        parameters in nn::parameters() order
//   u64            FNV-1a hash of every preceding byte
//
// Integers and doubles are stored little-endian (the host order on every
// supported target; other hosts are rejected).

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emg/errors.hpp"
#include "emg/features.hpp"
#include "emg/nn/network.hpp"

namespace emg {

struct ModelArtifact {
  nn::NetworkState network;
  FeatureConfig features;
  Normalizer normalizer;
  double sample_rate = 500.0;
  std::uint64_t seed = 0;
  std::string dataset_name;

  bool operator==(const ModelArtifact&) const = default;
};

inline constexpr std::array<char, 8> kModelMagic = {'E', 'M', 'G', 'C', 'N', 'N', '\0', '\1'};
inline constexpr std::uint32_t kModelVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little, "model.bin assumes a little-endian host");

inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <class T>
void put(std::string& buf, const T& v) {
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.append(raw, sizeof(T));
}

inline void put_doubles(std::string& buf, const std::vector<double>& v) {
  buf.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
}

class Reader {
public:
  Reader(const std::string& bytes, std::string path) : bytes_(bytes), path_(std::move(path)) {}

  template <class T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  void get_doubles(std::vector<double>& v) {
    std::memcpy(v.data(), take(v.size() * sizeof(double)), v.size() * sizeof(double));
  }
  std::string get_string(std::size_t n) { return std::string(take(n), n); }
  std::size_t position() const { return pos_; }

private:
  const char* take(std::size_t n) {
    if (n > bytes_.size() - pos_)
      throw DataError(path_ + ": model file is truncated");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  const std::string& bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

inline const char* activation_name(nn::Activation a) {
  return a == nn::Activation::relu ? "relu" : "identity";
}

inline nn::Activation activation_from(const std::string& s) {
  if (s == "relu")
    return nn::Activation::relu;
  if (s == "identity")
    return nn::Activation::identity;
  throw ConfigError("unknown activation '" + s + "'");
}

inline const char* normalization_name(Normalization n) {
  return n == Normalization::zscore ? "zscore" : "none";
}

inline Normalization normalization_from(const std::string& s) {
  if (s == "zscore")
    return Normalization::zscore;
  if (s == "none")
    return Normalization::none;
  throw ConfigError("unknown normalization '" + s + "'");
}

} // namespace detail

inline nlohmann::ordered_json network_spec_json(const nn::NetworkSpec& spec) {
  nlohmann::ordered_json conv = nlohmann::ordered_json::array();
  for (const auto& c : spec.conv)
    conv.push_back({{"filters", c.filters}, {"kernel", c.kernel}, {"stride", c.stride}});
  return {{"conv", conv},
          {"dense_units", spec.dense_units},
          {"activation", detail::activation_name(spec.hidden_activation)}};
}

inline nlohmann::ordered_json feature_config_json(const FeatureConfig& f) {
  return {{"ar_order", f.ar_order},
          {"nbins", f.nbins},
          {"log_floor", f.log_floor},
          {"normalization", detail::normalization_name(f.normalization)}};
}

inline void save_model(const ModelArtifact& m, const std::filesystem::path& path) {
  const auto& spec = m.network.spec;
  nlohmann::ordered_json meta = {{"network", network_spec_json(spec)},
                                 {"input_length", spec.input_length},
                                 {"num_classes", spec.num_classes},
                                 {"features", feature_config_json(m.features)},
                                 {"sample_rate", m.sample_rate},
                                 {"seed", m.seed},
                                 {"dataset", m.dataset_name},
                                 {"normalizer_fitted_on", m.normalizer.fitted_on},
                                 {"parameter_count", nn::parameter_count(m.network)}};
  const std::string meta_text = meta.dump();

  std::string buf(kModelMagic.begin(), kModelMagic.end());
  detail::put(buf, kModelVersion);
  detail::put(buf, static_cast<std::uint64_t>(meta_text.size()));
  buf += meta_text;
  for (const auto* v : {&m.normalizer.mean1, &m.normalizer.std1, &m.normalizer.mean2, &m.normalizer.std2})
    detail::put_doubles(buf, *v);
  for (const auto* t : nn::parameters(m.network))
    detail::put_doubles(buf, t->values);
  detail::put(buf, detail::fnv1a(buf));

  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw DataError("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out)
    throw DataError("write failed: " + path.string());
}

inline ModelArtifact load_model(const std::filesystem::path& path) {
  const std::string where = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DataError("cannot open model " + where);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < kModelMagic.size() + sizeof(std::uint64_t) ||
      !std::equal(kModelMagic.begin(), kModelMagic.end(), bytes.begin()))
    throw DataError(where + ": not a model file");
  {
    const std::size_t body = bytes.size() - sizeof(std::uint64_t);
    std::uint64_t stored;
    std::memcpy(&stored, bytes.data() + body, sizeof stored);
    if (stored != detail::fnv1a(bytes.substr(0, body)))
      throw DataError(where + ": checksum mismatch (file is corrupt)");
  }

  detail::Reader rd(bytes, where);
  (void)rd.get_string(kModelMagic.size());
  if (const auto version = rd.get<std::uint32_t>(); version != kModelVersion)
    throw DataError(where + ": unsupported model version " + std::to_string(version));
  const auto meta_len = rd.get<std::uint64_t>();
  ModelArtifact m;
  try {
    const auto meta = nlohmann::json::parse(rd.get_string(meta_len));
    nn::NetworkSpec spec;
    spec.conv.clear();
    for (const auto& c : meta.at("network").at("conv"))
      spec.conv.push_back({c.at("filters").get<std::size_t>(), c.at("kernel").get<std::size_t>(),
                           c.at("stride").get<std::size_t>()});
    spec.dense_units = meta.at("network").at("dense_units").get<std::size_t>();
    spec.hidden_activation = detail::activation_from(meta.at("network").at("activation").get<std::string>());
    spec.input_length = meta.at("input_length").get<std::size_t>();
    spec.num_classes = meta.at("num_classes").get<std::size_t>();
    const auto& f = meta.at("features");
    m.features.ar_order = f.at("ar_order").get<int>();
    m.features.nbins = f.at("nbins").get<int>();
    m.features.log_floor = f.at("log_floor").get<double>();
    m.features.normalization = detail::normalization_from(f.at("normalization").get<std::string>());
    m.sample_rate = meta.at("sample_rate").get<double>();
    m.seed = meta.at("seed").get<std::uint64_t>();
    m.dataset_name = meta.at("dataset").get<std::string>();
    m.normalizer.fitted_on = meta.at("normalizer_fitted_on").get<std::string>();
    m.network = nn::make_network(spec);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(where + ": bad model metadata: " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(where + ": bad model metadata: " + e.what());
  } catch (const nn::ShapeError& e) {
    throw DataError(where + ": bad model metadata: " + e.what());
  }

  const auto nb = static_cast<std::size_t>(m.features.nbins);
  if (nb != m.network.spec.input_length)
    throw DataError(where + ": feature bins do not match network input length");
  for (auto* v : {&m.normalizer.mean1, &m.normalizer.std1, &m.normalizer.mean2, &m.normalizer.std2}) {
    v->resize(nb);
    rd.get_doubles(*v);
  }
  for (auto* t : nn::parameters(m.network))
    rd.get_doubles(t->values);
  if (rd.position() != bytes.size() - sizeof(std::uint64_t))
    throw DataError(where + ": trailing bytes after parameters");
  return m;
}

} // namespace emg
