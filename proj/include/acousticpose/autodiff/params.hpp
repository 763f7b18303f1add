#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "acousticpose/autodiff/tensor.hpp"

namespace acousticpose::ad {

struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<double> values;
};

// Ordered registry of trainable leaves.
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor tensor;
    };

    // Registers a leaf (marked requires_grad) and returns it. Duplicate names throw ContractError.
    Tensor add(const std::string& name, Tensor t);
    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }
    Tensor get(const std::string& name) const;
    bool contains(const std::string& name) const;
    std::size_t size() const { return entries_.size(); }
    std::size_t total_numel() const;
    void zero_grad();

    std::vector<NamedArray> snapshot(const std::string& prefix = "") const;
    // Overwrites values in place. Missing, extra or reshaped names throw CheckpointError.
    void restore(const std::vector<NamedArray>& arrays, const std::string& prefix = "");

private:
    std::vector<Entry> entries_;
};

enum class DType { F32, F64 };

struct TensorFile {
    std::vector<NamedArray> arrays;
    nlohmann::json meta;

    const NamedArray* find(const std::string& name) const;
    // Arrays whose names start with `prefix`, with the prefix stripped.
    std::vector<NamedArray> with_prefix(const std::string& prefix) const;
};

// Flat little-endian payload at `bin_path` plus a JSON index next to it
// (same stem, .json) listing {name, shape, dtype, offset} and `meta`.
void save_tensors(const std::filesystem::path& bin_path, const std::vector<NamedArray>& arrays, DType dtype,
                  const nlohmann::json& meta = nlohmann::json::object());
TensorFile load_tensors(const std::filesystem::path& bin_path);

}  // namespace acousticpose::ad
