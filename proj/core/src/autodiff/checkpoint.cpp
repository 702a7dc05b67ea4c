#include "a3s/autodiff/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <vector>

#include "a3s/errors.hpp"

namespace a3s {
namespace {

constexpr char kMagic[4] = {'A', '3', 'S', '1'};

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(std::string bytes, std::string file) : bytes_(std::move(bytes)), file_(std::move(file)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw LoadError(file_ + ": truncated checkpoint");
  }
  std::string bytes_;
  std::string file_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params) {
  std::string buf(kMagic, 4);
  put_u32(buf, kCheckpointVersion);
  put_u32(buf, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf += name;
    put_u32(buf, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u32(buf, static_cast<std::uint32_t>(d));
    for (double v : t.data()) put_f64(buf, v);
  }
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::map<std::string, Tensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes), path.string());
  if (r.str(4) != std::string(kMagic, 4)) throw LoadError(path.string() + ": bad magic, not an A3S1 checkpoint");
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw LoadError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  const auto count = r.u32();
  std::map<std::string, Tensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.u32());
    const auto rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = r.f64();
    if (out.count(name)) throw LoadError(path.string() + ": duplicate entry '" + name + "'");
    out.emplace(std::move(name), Tensor::from(std::move(shape), std::move(data)));
  }
  if (!r.done()) throw LoadError(path.string() + ": trailing bytes after last parameter");
  return out;
}

void load_checkpoint(const std::filesystem::path& path, ParameterSet& params) {
  const auto stored = read_checkpoint(path);
  std::vector<std::string> problems;
  for (const auto& [name, t] : params) {
    auto it = stored.find(name);
    if (it == stored.end())
      problems.push_back("missing '" + name + "'");
    else if (it->second.shape() != t.shape())
      problems.push_back("shape of '" + name + "': checkpoint " + shape_str(it->second.shape()) +
                         " vs model " + shape_str(t.shape()));
  }
  for (const auto& [name, _] : stored)
    if (!params.contains(name)) problems.push_back("unexpected '" + name + "'");
  if (!problems.empty()) {
    std::string msg = "incompatible checkpoint " + path.string() + ":";
    for (const auto& p : problems) msg += "\n  " + p;
    throw LoadError(msg);
  }
  for (auto& [name, t] : params) {
    const auto src = stored.at(name).data();
    std::copy(src.begin(), src.end(), t.mutable_data().begin());
    t.zero_grad();
  }
}

}  // namespace a3s
