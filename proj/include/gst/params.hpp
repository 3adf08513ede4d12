#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "gst/autodiff.hpp"
#include "gst/tensor.hpp"

namespace gst {

/// Named learnable tensors, ordered by name.
class ParamStore {
 public:
  void set(const std::string& name, Tensor value);
  const Tensor& get(const std::string& name) const;
  Tensor& get_mut(const std::string& name);
  bool contains(const std::string& name) const { return values_.contains(name); }
  std::size_t size() const { return values_.size(); }
  std::size_t scalar_count() const;
  const std::map<std::string, Tensor>& items() const { return values_; }

 private:
  std::map<std::string, Tensor> values_;
};

using GradientMap = std::map<std::string, Tensor>;

/// Graph leaves for one forward pass over a ParamStore snapshot.
class ParamBinding {
 public:
  explicit ParamBinding(const ParamStore& store);

  const Var& operator[](const std::string& name) const;
  GradientMap gradients(const Gradients& grads) const;

 private:
  std::map<std::string, Var> vars_;
};

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ParamStore params;
  nlohmann::json metadata;  // free-form; the model config lives here
};

/// JSON container: {"format_version", "metadata", "params": {name: {shape, data}}}.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gst
