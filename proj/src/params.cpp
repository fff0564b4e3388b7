#include "pdcrn/params.hpp"

namespace pdcrn {

void ParamLayout::add(std::string name, Shape shape, ParamRole role, double init_scale) {
  for (const auto& e : entries_)
    if (e.name == name) throw std::invalid_argument("duplicate parameter name " + name);
  entries_.push_back({std::move(name), shape, role, init_scale});
}

void ParamLayout::add_conv(const std::string& prefix, Shape weight_shape,
                           std::size_t bias_channels, double init_scale) {
  add(prefix + ".w", weight_shape, ParamRole::weight, init_scale);
  add(prefix + ".b", Shape{1, bias_channels, 1, 1}, ParamRole::bias);
}

std::size_t ParamLayout::scalar_count() const {
  std::size_t total = 0;
  for (const auto& e : entries_) total += e.shape.count();
  return total;
}

template <typename T>
void ParamSet<T>::add(std::string name, Tensor4<T> value) {
  if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name " + name);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(value));
}

template <typename T>
bool ParamSet<T>::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

template <typename T>
const Tensor4<T>& ParamSet<T>::get(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("unknown parameter " + std::string(name));
  return entries_[it->second].second;
}

template <typename T>
Tensor4<T>& ParamSet<T>::get(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("unknown parameter " + std::string(name));
  return entries_[it->second].second;
}

template <typename T>
std::size_t ParamSet<T>::scalar_count() const {
  std::size_t total = 0;
  for (const auto& e : entries_) total += e.second.size();
  return total;
}

template <typename T>
ParamSet<T> ParamSet<T>::zeros_like() const {
  ParamSet out;
  for (const auto& [name, t] : entries_) out.add(name, Tensor4<T>(t.shape()));
  return out;
}

template <typename T>
void require_aligned(const ParamSet<T>& a, const ParamSet<T>& b, const char* what) {
  if (a.size() != b.size())
    throw ShapeError(std::string(what) + ": parameter count " + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& ea = a.entries()[i];
    const auto& eb = b.entries()[i];
    if (ea.first != eb.first || ea.second.shape() != eb.second.shape())
      throw ShapeError(std::string(what) + ": parameter " + ea.first + " " +
                       ea.second.shape().str() + " vs " + eb.first + " " +
                       eb.second.shape().str());
  }
}

template <typename T>
BoundParams<T>::BoundParams(Tape<T>& tape, const ParamSet<T>& params, bool requires_grad,
                            const std::map<std::string, Var<T>, std::less<>>& overrides)
    : tape_(&tape) {
  for (const auto& [name, value] : params.entries()) {
    auto it = overrides.find(name);
    Var<T> v = it != overrides.end() ? it->second : tape.leaf(value, requires_grad);
    index_.emplace(name, vars_.size());
    vars_.emplace_back(name, v);
  }
}

template <typename T>
Var<T> BoundParams<T>::operator[](std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("unknown parameter " + std::string(name));
  return vars_[it->second].second;
}

template <typename T>
ParamSet<T> BoundParams<T>::gradients() const {
  ParamSet<T> out;
  for (const auto& [name, v] : vars_) out.add(name, tape_->grad(v));
  return out;
}

template class ParamSet<float>;
template class ParamSet<double>;
template class BoundParams<float>;
template class BoundParams<double>;
template void require_aligned(const ParamSet<float>&, const ParamSet<float>&, const char*);
template void require_aligned(const ParamSet<double>&, const ParamSet<double>&, const char*);

}  // namespace pdcrn
