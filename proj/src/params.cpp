#include "gst/params.hpp"

#include <fstream>
#include <stdexcept>

#include "gst/errors.hpp"

namespace gst {

void ParamStore::set(const std::string& name, Tensor value) { values_[name] = std::move(value); }

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) {
    throw std::out_of_range("parameter not found: " + name);
  }
  return it->second;
}

Tensor& ParamStore::get_mut(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) {
    throw std::out_of_range("parameter not found: " + name);
  }
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t total = 0;
  for (const auto& [name, t] : values_) total += t.size();
  return total;
}

ParamBinding::ParamBinding(const ParamStore& store) {
  for (const auto& [name, value] : store.items()) {
    vars_.emplace(name, parameter(value, name));
  }
}

const Var& ParamBinding::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) {
    throw std::out_of_range("parameter not bound: " + name);
  }
  return it->second;
}

GradientMap ParamBinding::gradients(const Gradients& grads) const {
  GradientMap out;
  for (const auto& [name, var] : vars_) out.emplace(name, grads.of(var));
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, t] : checkpoint.params.items()) {
    params[name] = {{"shape", t.shape()}, {"data", t.vec()}};
  }
  nlohmann::json doc = {{"format_version", kCheckpointVersion},
                        {"metadata", checkpoint.metadata},
                        {"params", std::move(params)}};
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write checkpoint " + path.string());
  }
  out << doc.dump();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open checkpoint " + path.string());
  }
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint " + path.string() + ": " + e.what());
  }
  if (!doc.contains("format_version") || doc["format_version"] != kCheckpointVersion) {
    throw FormatError("checkpoint " + path.string() + ": unsupported format_version");
  }
  Checkpoint cp;
  cp.metadata = doc.value("metadata", nlohmann::json::object());
  for (const auto& [name, entry] : doc.at("params").items()) {
    cp.params.set(name, Tensor(entry.at("shape").get<Shape>(),
                               entry.at("data").get<std::vector<double>>()));
  }
  return cp;
}

}  // namespace gst
