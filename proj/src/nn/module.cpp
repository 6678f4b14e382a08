// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#include "olaf/nn/module.hpp"

#include <algorithm>

#include "olaf/core/error.hpp"

namespace olaf::nn {

namespace {

template <typename Vec>
bool name_taken(const Vec &v, const std::string &name) {
  return std::any_of(v.begin(), v.end(),
                     [&](const auto &e) { return e.first == name; });
}

} // namespace

Variable &Module::register_parameter(const std::string &name, Variable v) {
  OLAF_CHECK(!name_taken(params_, name), ConfigError,
             "duplicate parameter name '%s'", name.c_str());
  OLAF_CHECK(v.defined(), ConfigError, "parameter '%s' is undefined",
             name.c_str());
  params_.emplace_back(name, std::move(v));
  return params_.back().second;
}

Tensor &Module::register_buffer(const std::string &name, Tensor *t) {
  OLAF_CHECK(!name_taken(buffers_, name), ConfigError,
             "duplicate buffer name '%s'", name.c_str());
  buffers_.emplace_back(name, t);
  return *t;
}

void Module::register_module(const std::string &name, Module *m) {
  OLAF_CHECK(!name_taken(children_, name), ConfigError,
             "duplicate child module name '%s'", name.c_str());
  children_.emplace_back(name, m);
}

void Module::collect_parameters(
    const std::string &prefix,
    std::vector<std::pair<std::string, Variable>> &out) const {
  for (const auto &[name, v] : params_) out.emplace_back(prefix + name, v);
  for (const auto &[name, child] : children_)
    child->collect_parameters(prefix + name + ".", out);
}

void Module::collect_buffers(
    const std::string &prefix,
    std::vector<std::pair<std::string, Tensor *>> &out) {
  for (const auto &[name, t] : buffers_) out.emplace_back(prefix + name, t);
  for (const auto &[name, child] : children_)
    child->collect_buffers(prefix + name + ".", out);
}

std::vector<std::pair<std::string, Variable>> Module::named_parameters() const {
  std::vector<std::pair<std::string, Variable>> out;
  collect_parameters("", out);
  return out;
}

std::vector<Variable> Module::parameters() const {
  std::vector<Variable> out;
  for (auto &[name, v] : named_parameters()) out.push_back(v);
  return out;
}

std::vector<std::pair<std::string, Tensor *>> Module::named_buffers() {
  std::vector<std::pair<std::string, Tensor *>> out;
  collect_buffers("", out);
  return out;
}

void Module::zero_grad() {
  for (auto &v : parameters()) v.zero_grad();
}

void Module::set_training(bool on) {
  training_ = on;
  for (auto &[name, child] : children_) child->set_training(on);
}

void Module::set_trainable(bool on) {
  for (auto &v : parameters()) v.node()->requires_grad = on;
}

} // namespace olaf::nn
