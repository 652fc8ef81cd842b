#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "longreach/rng.hpp"
#include "longreach/tensor.hpp"

namespace longreach {

struct Parameter {
  std::string name;
  Tensor tensor;
};

// Owns a model's named trainable tensors. Matrices are initialized
// uniform in +-1/sqrt(fan_in) with fan_in = first dimension, or an
// explicit bound where fan-in scaling does not apply (embedding lookups);
// vectors (biases) start at zero. Names must be unique.
class ParameterStore {
 public:
  Tensor add_matrix(const std::string& name, int rows, int cols, Rng& rng);
  Tensor add_matrix(const std::string& name, int rows, int cols, Rng& rng,
                    float bound);
  Tensor add_bias(const std::string& name, int n);
  Tensor add_zeros(const std::string& name, std::vector<int> shape);

  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<Parameter>& all() const { return params_; }
  std::vector<Tensor> tensors() const;
  size_t total_size() const;

  // Checkpoint layout: a text manifest (name, shape, byte offset per line)
  // plus one little-endian float32 blob. Round-trips bit-exactly.
  void save(const std::filesystem::path& dir) const;
  void load(const std::filesystem::path& dir);

 private:
  Tensor add(const std::string& name, Tensor t);
  std::vector<Parameter> params_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace longreach
