#include "driftmeta/checkpoint.hpp"

#include <cstring>

#include "driftmeta/errors.hpp"
#include "driftmeta/io.hpp"

namespace driftmeta {

namespace {

constexpr char kMagic[4] = {'M', 'D', 'A', '1'};

// The format is little-endian; this code assumes a little-endian host, which
// covers every platform the project builds on.
template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& data, const std::string& path)
      : data_(data), path_(path) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > data_.size())
      throw IoError("truncated checkpoint: " + path_);
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_bytes(size_t n) {
    if (pos_ + n > data_.size())
      throw IoError("truncated checkpoint: " + path_);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  const std::string& data_;
  std::string path_;
  size_t pos_ = 0;
};

void put_group(std::string& out, const ParamGroup& g) {
  put<uint32_t>(out, static_cast<uint32_t>(g.name.size()));
  out.append(g.name);
  put<uint64_t>(out, static_cast<uint64_t>(g.value.rows()));
  put<uint64_t>(out, static_cast<uint64_t>(g.value.cols()));
  for (Eigen::Index r = 0; r < g.value.rows(); ++r)
    for (Eigen::Index c = 0; c < g.value.cols(); ++c)
      put<double>(out, g.value(r, c));
}

ParamGroup get_group(Reader& in) {
  ParamGroup g;
  const uint32_t name_len = in.get<uint32_t>();
  g.name = in.get_bytes(name_len);
  const uint64_t rows = in.get<uint64_t>();
  const uint64_t cols = in.get<uint64_t>();
  if (rows > (1u << 24) || cols > (1u << 24))
    throw IoError("implausible checkpoint shape for group " + g.name);
  g.value.resize(static_cast<Eigen::Index>(rows),
                 static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < g.value.rows(); ++r)
    for (Eigen::Index c = 0; c < g.value.cols(); ++c)
      g.value(r, c) = in.get<double>();
  return g;
}

const Matrix& find_group(const std::vector<ParamGroup>& groups,
                         const std::string& name) {
  for (const ParamGroup& g : groups)
    if (g.name == name) return g.value;
  throw IoError("checkpoint is missing group " + name);
}

void assign_group(const std::vector<ParamGroup>& groups,
                  const std::string& name, Matrix& dst) {
  const Matrix& src = find_group(groups, name);
  if (src.rows() != dst.rows() || src.cols() != dst.cols())
    throw IoError("checkpoint group " + name + " has the wrong shape");
  dst = src;
}

// Adam moments and step counter for one optimizer, flattened under `prefix`.
void pack_adam(std::vector<ParamGroup>& out, const Adam& opt,
               const std::string& prefix) {
  Matrix t(1, 1);
  t(0, 0) = static_cast<double>(opt.steps_taken());
  out.push_back({prefix + "/t", t});
  const auto& m = opt.moments_m();
  const auto& v = opt.moments_v();
  for (size_t i = 0; i < m.size(); ++i) {
    out.push_back({prefix + "/m" + std::to_string(i), m[i]});
    out.push_back({prefix + "/v" + std::to_string(i), v[i]});
  }
}

void unpack_adam(const std::vector<ParamGroup>& groups, Adam& opt,
                 const std::string& prefix) {
  const Matrix& t = find_group(groups, prefix + "/t");
  opt.set_steps_taken(static_cast<int64_t>(t(0, 0)));
  opt.moments_m().clear();
  opt.moments_v().clear();
  for (size_t i = 0;; ++i) {
    const std::string mn = prefix + "/m" + std::to_string(i);
    bool found = false;
    for (const ParamGroup& g : groups)
      if (g.name == mn) found = true;
    if (!found) break;
    opt.moments_m().push_back(find_group(groups, mn));
    opt.moments_v().push_back(find_group(groups, prefix + "/v" + std::to_string(i)));
  }
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put<uint64_t>(out, c.config_hash);
  put<uint32_t>(out, static_cast<uint32_t>(c.groups.size()));
  for (const ParamGroup& g : c.groups) put_group(out, g);
  put<uint8_t>(out, c.has_moments ? 1 : 0);
  if (c.has_moments) {
    put<uint32_t>(out, static_cast<uint32_t>(c.moments.size()));
    for (const ParamGroup& g : c.moments) put_group(out, g);
  }
  write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const std::string& path, uint64_t expect_hash,
                           bool force) {
  const std::string data = read_file(path);
  Reader in(data, path);
  const std::string magic = in.get_bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0)
    throw IoError(path + " is not a checkpoint file");

  Checkpoint c;
  c.config_hash = in.get<uint64_t>();
  if (c.config_hash != expect_hash && !force)
    throw IoError(path + ": config hash mismatch (checkpoint was written by "
                  "a different config; pass --force to load anyway)");

  const uint32_t count = in.get<uint32_t>();
  c.groups.reserve(count);
  for (uint32_t i = 0; i < count; ++i) c.groups.push_back(get_group(in));

  c.has_moments = in.get<uint8_t>() != 0;
  if (c.has_moments) {
    const uint32_t mcount = in.get<uint32_t>();
    c.moments.reserve(mcount);
    for (uint32_t i = 0; i < mcount; ++i) c.moments.push_back(get_group(in));
  }
  if (!in.done()) throw IoError(path + ": trailing bytes after checkpoint");
  return c;
}

Checkpoint pack_model(const ModelState& state, uint64_t config_hash) {
  Checkpoint c;
  c.config_hash = config_hash;
  // visit only offers a mutable signature; packing does not modify
  ModelState& s = const_cast<ModelState&>(state);
  s.forecaster.visit([&](const std::string& n, Matrix& m) {
    c.groups.push_back({"f/" + n, m});
  });
  s.adapters.visit([&](const std::string& n, Matrix& m) {
    c.groups.push_back({"a/" + n, m});
  });
  c.has_moments = true;
  pack_adam(c.moments, state.opt_f, "opt_f");
  pack_adam(c.moments, state.opt_ad, "opt_a");
  return c;
}

void unpack_model(const Checkpoint& c, ModelState* state) {
  state->forecaster.visit([&](const std::string& n, Matrix& m) {
    assign_group(c.groups, "f/" + n, m);
  });
  state->adapters.visit([&](const std::string& n, Matrix& m) {
    assign_group(c.groups, "a/" + n, m);
  });
  if (c.has_moments) {
    unpack_adam(c.moments, state->opt_f, "opt_f");
    unpack_adam(c.moments, state->opt_ad, "opt_a");
  }
}

Checkpoint pack_inference(const TaskInferParams& pi, uint64_t config_hash) {
  Checkpoint c;
  c.config_hash = config_hash;
  TaskInferParams& p = const_cast<TaskInferParams&>(pi);
  p.pi1.visit([&](const std::string& n, Matrix& m) {
    c.groups.push_back({"pi1/" + n, m});
  });
  p.pi2.visit([&](const std::string& n, Matrix& m) {
    c.groups.push_back({"pi2/" + n, m});
  });
  return c;
}

void unpack_inference(const Checkpoint& c, TaskInferParams* pi) {
  pi->pi1.visit([&](const std::string& n, Matrix& m) {
    assign_group(c.groups, "pi1/" + n, m);
  });
  pi->pi2.visit([&](const std::string& n, Matrix& m) {
    assign_group(c.groups, "pi2/" + n, m);
  });
}

}  // namespace driftmeta
