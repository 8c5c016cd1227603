#pragma once

// Binary ParamSet container:
//   magic "BNET2PS\0", u32 version,
//   spec header, u32 layer count,
//   per layer: weight tensor, u8 bias flag, bias tensor if present,
//   u32 crc32 of every preceding byte.
// Tensors are u32 rank, u64 dims, then little-endian float64 data. A plain
// key=value sidecar with the spec sits next to the binary file.

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bnet2/network.hpp"

namespace bnet2 {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline constexpr char param_magic[8] = {'B', 'N', 'E', 'T', '2', 'P', 'S', '\0'};
inline constexpr std::uint32_t param_version = 1;

class ByteWriter {
 public:
  template <class T>
  void put(T v) {
    const auto u = std::bit_cast<std::make_unsigned_t<T>>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes_.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
  }
  void put_double(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void put_raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  void put_tensor(const Tensor& t) {
    put(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put(static_cast<std::uint64_t>(d));
    for (double v : t.data()) put_double(v);
  }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  ByteReader(const char* p, std::size_t n) : p_(p), n_(n) {}

  template <class T>
  T get() {
    need(sizeof(T));
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      u |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(p_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return std::bit_cast<T>(u);
  }
  double get_double() { return std::bit_cast<double>(get<std::uint64_t>()); }
  Tensor get_tensor() {
    const auto rank = get<std::uint32_t>();
    if (rank > 8) throw FormatError("tensor rank " + std::to_string(rank) + " is implausible");
    Shape shape(rank);
    std::size_t count = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(get<std::uint64_t>());
      count *= d;
    }
    need(8 * count);
    std::vector<double> data(count);
    for (auto& v : data) v = get_double();
    return Tensor::from_external(std::move(shape), std::move(data));
  }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t k) const {
    if (pos_ + k > n_) throw FormatError("truncated parameter file");
  }
  const char* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(const char* p, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(0L, reinterpret_cast<const Bytef*>(p), static_cast<uInt>(n)));
}

}  // namespace detail

/// key=value description of a spec, one pair per line.
inline std::string spec_sidecar(const NetworkSpec& s) {
  std::ostringstream os;
  os << "variant=" << to_string(s.variant) << "\nN=" << s.N << "\nK=" << s.K << "\nL=" << s.L << "\nr=" << s.r
     << "\nw=" << s.w << "\nswitch_layer=" << s.switch_layer << "\nfinal_activation=" << s.final_activation
     << "\ncomplex_input=" << s.complex_input << "\n";
  return os.str();
}

inline std::map<std::string, std::string> parse_key_values(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("expected key=value, got '" + line + "'");
    auto trim = [](std::string x) {
      const auto s = x.find_first_not_of(" \t\r"), e = x.find_last_not_of(" \t\r");
      return s == std::string::npos ? std::string{} : x.substr(s, e - s + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline NetworkSpec parse_spec_sidecar(const std::string& text) {
  std::istringstream is(text);
  const auto kv = parse_key_values(is);
  auto get = [&](const char* k) {
    const auto it = kv.find(k);
    if (it == kv.end()) throw FormatError(std::string("spec sidecar is missing '") + k + "'");
    return it->second;
  };
  NetworkSpec s;
  s.variant = parse_variant(get("variant"));
  s.N = std::stoull(get("N"));
  s.K = std::stoull(get("K"));
  s.L = std::stoi(get("L"));
  s.r = std::stoi(get("r"));
  s.w = std::stoull(get("w"));
  s.switch_layer = std::stoi(get("switch_layer"));
  s.final_activation = get("final_activation") == "1";
  s.complex_input = get("complex_input") == "1";
  return s;
}

inline std::vector<char> encode_params(const ParamSet& ps) {
  detail::ByteWriter w;
  w.put_raw(detail::param_magic, sizeof detail::param_magic);
  w.put(detail::param_version);
  const auto& s = ps.spec;
  w.put(static_cast<std::uint32_t>(s.variant));
  w.put(static_cast<std::uint64_t>(s.N));
  w.put(static_cast<std::uint64_t>(s.K));
  w.put(static_cast<std::int32_t>(s.L));
  w.put(static_cast<std::int32_t>(s.r));
  w.put(static_cast<std::uint64_t>(s.w));
  w.put(static_cast<std::int32_t>(s.switch_layer));
  w.put(static_cast<std::uint8_t>(s.final_activation));
  w.put(static_cast<std::uint8_t>(s.complex_input));
  w.put(static_cast<std::uint32_t>(ps.layers.size()));
  for (const auto& l : ps.layers) {
    w.put_tensor(l.weight);
    w.put(static_cast<std::uint8_t>(!l.bias.empty()));
    if (!l.bias.empty()) w.put_tensor(l.bias);
  }
  auto out = w.bytes();
  detail::ByteWriter tail;
  tail.put(detail::crc32_of(out.data(), out.size()));
  out.insert(out.end(), tail.bytes().begin(), tail.bytes().end());
  return out;
}

inline ParamSet decode_params(const std::vector<char>& bytes) {
  if (bytes.size() < sizeof detail::param_magic + 8) throw FormatError("parameter file too short");
  if (!std::equal(std::begin(detail::param_magic), std::end(detail::param_magic), bytes.begin()))
    throw FormatError("bad magic bytes");
  const std::size_t body = bytes.size() - 4;
  detail::ByteReader crc_reader(bytes.data() + body, 4);
  if (crc_reader.get<std::uint32_t>() != detail::crc32_of(bytes.data(), body))
    throw FormatError("checksum mismatch");
  detail::ByteReader r(bytes.data() + sizeof detail::param_magic, body - sizeof detail::param_magic);
  if (const auto v = r.get<std::uint32_t>(); v != detail::param_version)
    throw FormatError("unsupported format version " + std::to_string(v));
  ParamSet ps;
  auto& s = ps.spec;
  const auto variant = r.get<std::uint32_t>();
  if (variant > 2) throw FormatError("unknown variant code");
  s.variant = static_cast<Variant>(variant);
  s.N = static_cast<std::size_t>(r.get<std::uint64_t>());
  s.K = static_cast<std::size_t>(r.get<std::uint64_t>());
  s.L = r.get<std::int32_t>();
  s.r = r.get<std::int32_t>();
  s.w = static_cast<std::size_t>(r.get<std::uint64_t>());
  s.switch_layer = r.get<std::int32_t>();
  s.final_activation = r.get<std::uint8_t>() != 0;
  s.complex_input = r.get<std::uint8_t>() != 0;
  const auto plan = plan_layers(s);
  const auto n = r.get<std::uint32_t>();
  if (n != plan.size()) throw FormatError("layer count does not match the spec");
  for (std::uint32_t i = 0; i < n; ++i) {
    LayerParams l;
    l.weight = r.get_tensor();
    if (r.get<std::uint8_t>()) l.bias = r.get_tensor();
    if (l.weight.shape() != plan[i].weight_shape() || l.bias.size() != plan[i].bias_size())
      throw FormatError("layer " + std::to_string(i) + " shape does not match the spec");
    ps.layers.push_back(std::move(l));
  }
  if (r.position() != body - sizeof detail::param_magic) throw FormatError("trailing bytes in parameter file");
  return ps;
}

/// Writes `path` and `path.spec`.
inline void save_params(const ParamSet& ps, const std::string& path) {
  const auto bytes = encode_params(ps);
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  std::ofstream side(path + ".spec");
  side << spec_sidecar(ps.spec);
  if (!out || !side) throw std::runtime_error("cannot write " + path);
}

/// Reads a container; when the sidecar exists it must agree with the header.
inline ParamSet load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ParamSet ps = decode_params(bytes);
  std::ifstream side(path + ".spec");
  if (side) {
    std::stringstream ss;
    ss << side.rdbuf();
    if (!(parse_spec_sidecar(ss.str()) == ps.spec)) throw FormatError("spec sidecar disagrees with " + path);
  }
  return ps;
}

}  // namespace bnet2
