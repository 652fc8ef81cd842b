#include "longreach/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace longreach {

Tensor ParameterStore::add(const std::string& name, Tensor t) {
  if (index_.count(name))
    throw Error("params: duplicate parameter name '" + name + "'");
  index_[name] = params_.size();
  params_.push_back({name, t});
  return t;
}

Tensor ParameterStore::add_matrix(const std::string& name, int rows, int cols,
                                  Rng& rng) {
  return add_matrix(name, rows, cols, rng,
                    1.0f / std::sqrt(static_cast<float>(rows)));
}

Tensor ParameterStore::add_matrix(const std::string& name, int rows, int cols,
                                  Rng& rng, float bound) {
  std::vector<float> data(static_cast<size_t>(rows) * cols);
  Rng stream = rng.substream(name);
  for (float& v : data) v = stream.uniform(-bound, bound);
  return add(name, Tensor({rows, cols}, std::move(data), true));
}

Tensor ParameterStore::add_bias(const std::string& name, int n) {
  return add(name, Tensor::zeros({n}, true));
}

Tensor ParameterStore::add_zeros(const std::string& name,
                                 std::vector<int> shape) {
  return add(name, Tensor::zeros(std::move(shape), true));
}

Tensor ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw Error("params: unknown parameter '" + name + "'");
  return params_[it->second].tensor;
}

bool ParameterStore::contains(const std::string& name) const {
  return index_.count(name) != 0;
}

std::vector<Tensor> ParameterStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const Parameter& p : params_) out.push_back(p.tensor);
  return out;
}

size_t ParameterStore::total_size() const {
  size_t n = 0;
  for (const Parameter& p : params_) n += p.tensor.numel();
  return n;
}

namespace {
constexpr const char* kMagic = "longreach-params-v1";
}

void ParameterStore::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "params.manifest");
  std::ofstream blob(dir / "params.bin", std::ios::binary);
  if (!manifest || !blob)
    throw Error("checkpoint: cannot write to " + dir.string());

  manifest << kMagic << "\n" << params_.size() << "\n";
  size_t offset = 0;
  for (const Parameter& p : params_) {
    manifest << p.name << "\t" << shape_str(p.tensor.shape()) << "\t" << offset
             << "\n";
    auto d = p.tensor.data();
    blob.write(reinterpret_cast<const char*>(d.data()),
               static_cast<std::streamsize>(d.size() * sizeof(float)));
    offset += d.size() * sizeof(float);
  }
  if (!manifest || !blob)
    throw Error("checkpoint: write failed in " + dir.string());
}

namespace {

std::vector<int> parse_shape(const std::string& s) {
  if (s.size() < 2 || s.front() != '[' || s.back() != ']')
    throw Error("checkpoint: malformed shape '" + s + "'");
  std::vector<int> shape;
  std::stringstream ss(s.substr(1, s.size() - 2));
  std::string item;
  while (std::getline(ss, item, ',')) shape.push_back(std::stoi(item));
  return shape;
}

}  // namespace

void ParameterStore::load(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "params.manifest");
  if (!manifest)
    throw Error("checkpoint: missing manifest in " + dir.string());
  std::ifstream blob(dir / "params.bin", std::ios::binary);
  if (!blob) throw Error("checkpoint: missing blob in " + dir.string());

  std::string magic;
  std::getline(manifest, magic);
  if (magic != kMagic)
    throw Error("checkpoint: unrecognized format in " + dir.string());
  size_t count = 0;
  manifest >> count;
  if (count != params_.size())
    throw Error("checkpoint: has " + std::to_string(count) +
                " parameters, model wants " + std::to_string(params_.size()));
  manifest.ignore(1, '\n');

  for (size_t i = 0; i < count; ++i) {
    std::string line;
    if (!std::getline(manifest, line))
      throw Error("checkpoint: truncated manifest");
    std::stringstream ss(line);
    std::string name, shape_s, offset_s;
    if (!std::getline(ss, name, '\t') || !std::getline(ss, shape_s, '\t') ||
        !std::getline(ss, offset_s))
      throw Error("checkpoint: malformed manifest line '" + line + "'");

    auto it = index_.find(name);
    if (it == index_.end())
      throw Error("checkpoint: unknown parameter '" + name + "'");
    Tensor t = params_[it->second].tensor;
    std::vector<int> shape = parse_shape(shape_s);
    if (shape != t.shape())
      throw Error("checkpoint: parameter '" + name + "' has shape " +
                  shape_str(shape) + ", model wants " + shape_str(t.shape()));

    size_t offset = std::stoull(offset_s);
    auto d = t.data();
    blob.seekg(static_cast<std::streamoff>(offset));
    blob.read(reinterpret_cast<char*>(d.data()),
              static_cast<std::streamsize>(d.size() * sizeof(float)));
    if (!blob)
      throw Error("checkpoint: blob read failed for '" + name + "'");
  }
}

}  // namespace longreach
