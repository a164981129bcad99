#include "hldet/params.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

#include "hldet/error.hpp"

namespace hldet::ad {

void AdamConfig::validate() const {
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ContractError("adam betas must lie strictly inside (0, 1)");
  }
  if (!(epsilon > 0.0)) throw ContractError("adam epsilon must be positive");
}

void ParamStore::insert(const std::string& name, Tensor value) {
  params_[name] = std::move(value);
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

Tensor& ParamStore::moment1(const std::string& name) {
  auto it = m_.find(name);
  if (it == m_.end()) it = m_.emplace(name, Tensor(at(name).shape)).first;
  return it->second;
}

Tensor& ParamStore::moment2(const std::string& name) {
  auto it = v_.find(name);
  if (it == v_.end()) it = v_.emplace(name, Tensor(at(name).shape)).first;
  return it->second;
}

void adam_step(ParamStore& params, const std::map<std::string, Tensor>& grads,
               const AdamConfig& config) {
  config.validate();
  for (const auto& [name, theta] : params.params()) {
    if (grads.find(name) == grads.end()) {
      throw ContractError("adam_step: missing gradient for parameter " + name);
    }
  }
  const std::int64_t t = params.step() + 1;
  params.set_step(t);
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  for (auto& [name, theta] : params.params()) {
    const Tensor& g = grads.at(name);
    if (!g.same_shape(theta)) {
      throw ContractError("adam_step: gradient shape " + shape_str(g.shape) +
                          " mismatches parameter " + name + " " +
                          shape_str(theta.shape));
    }
    Tensor& m = params.moment1(name);
    Tensor& v = params.moment2(name);
    for (std::size_t i = 0; i < theta.numel(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      theta[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon);
    }
  }
}

// --- checkpoint io ---------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'H', 'L', 'P', 'S'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof bits);
  put_u64(out, bits);
}

void write_record(std::string& out, const std::string& name, const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.append(name);
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape) put_u64(out, d);
  for (double v : t.values) put_f64(out, v);
}

class Reader {
 public:
  Reader(const std::string& buf, const std::string& path)
      : buf_(buf), path_(path) {}

  std::size_t offset() const { return pos_; }

  void need(std::size_t n, const char* what) {
    if (pos_ + n > buf_.size()) {
      throw ParseError(path_ + ": truncated while reading " + std::string(what),
                       pos_);
    }
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  double f64(const char* what) {
    std::uint64_t bits = u64(what);
    double d;
    std::memcpy(&d, &bits, sizeof d);
    return d;
  }

  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == buf_.size(); }

 private:
  const std::string& buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void ParamStore::save(const std::string& path) const {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  for (const auto& [name, t] : params_) write_record(out, name, t);
  for (const auto& [name, t] : m_) write_record(out, "adam.m." + name, t);
  for (const auto& [name, t] : v_) write_record(out, "adam.v." + name, t);
  write_record(out, "adam.t",
               Tensor::scalar(static_cast<double>(step_)));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ContractError("cannot open checkpoint for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw ContractError("short write to checkpoint: " + path);
}

ParamStore ParamStore::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ContractError("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  Reader r(buf, path);
  if (r.bytes(4, "magic") != std::string(kMagic, 4)) {
    throw ParseError(path + ": bad magic, expected HLPS", 0);
  }
  std::uint32_t version = r.u32("version");
  if (version != kVersion) {
    throw ParseError(path + ": unsupported version " + std::to_string(version), 4);
  }
  ParamStore store;
  while (!r.done()) {
    std::uint32_t name_len = r.u32("record name length");
    std::string name = r.bytes(name_len, "record name");
    std::uint32_t rank = r.u32(("rank of " + name).c_str());
    Shape shape(rank);
    for (std::uint32_t i = 0; i < rank; ++i)
      shape[i] = static_cast<std::size_t>(r.u64(("dims of " + name).c_str()));
    Tensor t(shape);
    for (std::size_t i = 0; i < t.numel(); ++i)
      t[i] = r.f64(("values of " + name).c_str());
    if (name == "adam.t") {
      store.set_step(static_cast<std::int64_t>(t.numel() ? t[0] : 0.0));
    } else if (name.rfind("adam.m.", 0) == 0) {
      store.m_[name.substr(7)] = std::move(t);
    } else if (name.rfind("adam.v.", 0) == 0) {
      store.v_[name.substr(7)] = std::move(t);
    } else {
      store.params_[name] = std::move(t);
    }
  }
  return store;
}

}  // namespace hldet::ad
