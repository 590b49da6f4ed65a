#include "grlhf/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "grlhf/error.hpp"

namespace grlhf {
namespace {

constexpr char kMagic[8] = {'G', 'R', 'L', 'H', 'F', 'C', 'K', '\0'};

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_doubles(std::string& out, const Eigen::VectorXd& v) {
  out.append(reinterpret_cast<const char*>(v.data()), static_cast<std::size_t>(v.size()) * sizeof(double));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  Eigen::VectorXd doubles(std::uint64_t n) {
    if (n > (bytes_.size() - pos_) / sizeof(double)) throw CorruptDataError("checkpoint truncated");
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
  }

  void bytes(char* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CorruptDataError("checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::uint64_t parameter_count(const std::vector<std::uint32_t>& sizes) {
  std::uint64_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) n += std::uint64_t{sizes[l]} * sizes[l + 1] + sizes[l + 1];
  return n;
}

}  // namespace

NetworkBlob to_blob(const Mlp& net, std::uint64_t seed) {
  NetworkBlob blob;
  blob.seed = seed;
  for (auto s : net.layer_sizes()) blob.sizes.push_back(static_cast<std::uint32_t>(s));
  blob.parameters = net.parameters();
  return blob;
}

Mlp mlp_from_blob(const NetworkBlob& blob) {
  if (blob.sizes.size() < 2) throw CorruptDataError("network needs at least input and output sizes");
  std::vector<std::size_t> hidden(blob.sizes.begin() + 1, blob.sizes.end() - 1);
  Rng rng(0);
  Mlp net(blob.sizes.front(), hidden, blob.sizes.back(), rng);
  net.set_parameters(blob.parameters);
  return net;
}

std::string encode_checkpoint(const Checkpoint& c) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, Checkpoint::kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.kind));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.networks.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.extras.size()));
  for (const auto& n : c.networks) {
    if (static_cast<std::uint64_t>(n.parameters.size()) != parameter_count(n.sizes)) {
      throw UsageError("network blob parameter count does not match its sizes");
    }
    put<std::uint64_t>(out, n.seed);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(n.sizes.size()));
    for (auto s : n.sizes) put<std::uint32_t>(out, s);
    put_doubles(out, n.parameters);
  }
  for (const auto& e : c.extras) {
    put<std::uint64_t>(out, static_cast<std::uint64_t>(e.size()));
    put_doubles(out, e);
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  char magic[sizeof(kMagic)];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw CorruptDataError("not a checkpoint file");
  if (r.get<std::uint32_t>() != Checkpoint::kVersion) throw CorruptDataError("unsupported checkpoint version");
  Checkpoint c;
  const auto kind = r.get<std::uint32_t>();
  if (kind != 1 && kind != 2) throw CorruptDataError("unknown checkpoint kind");
  c.kind = static_cast<CheckpointKind>(kind);
  const auto networks = r.get<std::uint32_t>();
  const auto extras = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < networks; ++i) {
    NetworkBlob n;
    n.seed = r.get<std::uint64_t>();
    const auto count = r.get<std::uint32_t>();
    if (count < 2 || count > 64) throw CorruptDataError("implausible layer count");
    for (std::uint32_t k = 0; k < count; ++k) n.sizes.push_back(r.get<std::uint32_t>());
    n.parameters = r.doubles(parameter_count(n.sizes));
    c.networks.push_back(std::move(n));
  }
  for (std::uint32_t i = 0; i < extras; ++i) c.extras.push_back(r.doubles(r.get<std::uint64_t>()));
  if (!r.at_end()) throw CorruptDataError("trailing bytes in checkpoint");
  return c;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptDataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << contents;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace grlhf
