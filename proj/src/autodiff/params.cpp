#include "acousticpose/autodiff/params.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "acousticpose/common/error.hpp"

namespace acousticpose::ad {

namespace fs = std::filesystem;

Tensor ParamStore::add(const std::string& name, Tensor t) {
    if (contains(name)) throw ContractError("parameter '" + name + "' registered twice");
    t.set_requires_grad(true);
    entries_.push_back({name, t});
    return t;
}

Tensor ParamStore::get(const std::string& name) const {
    for (const auto& e : entries_) {
        if (e.name == name) return e.tensor;
    }
    throw ContractError("no parameter named '" + name + "'");
}

bool ParamStore::contains(const std::string& name) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
}

std::size_t ParamStore::total_numel() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
}

std::vector<NamedArray> ParamStore::snapshot(const std::string& prefix) const {
    std::vector<NamedArray> out;
    for (const auto& e : entries_) {
        out.push_back({prefix + e.name, e.tensor.shape(), {e.tensor.data().begin(), e.tensor.data().end()}});
    }
    return out;
}

void ParamStore::restore(const std::vector<NamedArray>& arrays, const std::string& prefix) {
    std::set<std::string> seen;
    for (const auto& a : arrays) {
        if (a.name.rfind(prefix, 0) != 0) continue;
        const auto name = a.name.substr(prefix.size());
        auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
        if (it == entries_.end()) throw CheckpointError("checkpoint has unknown tensor '" + a.name + "'");
        if (it->tensor.shape() != a.shape) {
            throw CheckpointError("tensor '" + a.name + "' has shape " + shape_str(a.shape) + ", model expects " +
                                  shape_str(it->tensor.shape()));
        }
        it->tensor.mutable_data() = a.values;
        seen.insert(name);
    }
    for (const auto& e : entries_) {
        if (!seen.count(e.name)) throw CheckpointError("checkpoint lacks tensor '" + prefix + e.name + "'");
    }
}

const NamedArray* TensorFile::find(const std::string& name) const {
    for (const auto& a : arrays) {
        if (a.name == name) return &a;
    }
    return nullptr;
}

std::vector<NamedArray> TensorFile::with_prefix(const std::string& prefix) const {
    std::vector<NamedArray> out;
    for (const auto& a : arrays) {
        if (a.name.rfind(prefix, 0) == 0) out.push_back({a.name.substr(prefix.size()), a.shape, a.values});
    }
    return out;
}

void save_tensors(const fs::path& bin_path, const std::vector<NamedArray>& arrays, DType dtype,
                  const nlohmann::json& meta) {
    static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");
    if (bin_path.has_parent_path()) fs::create_directories(bin_path.parent_path());
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw DataError("cannot write " + bin_path.string());
    nlohmann::json index = nlohmann::json::array();
    std::size_t offset = 0;
    const std::size_t width = dtype == DType::F32 ? 4 : 8;
    for (const auto& a : arrays) {
        if (numel(a.shape) != a.values.size()) throw ContractError("tensor '" + a.name + "' shape/value mismatch");
        index.push_back({{"name", a.name}, {"shape", a.shape}, {"dtype", dtype == DType::F32 ? "float32" : "float64"},
                         {"offset", offset}});
        if (dtype == DType::F32) {
            std::vector<float> buf(a.values.begin(), a.values.end());
            bin.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
        } else {
            bin.write(reinterpret_cast<const char*>(a.values.data()), static_cast<std::streamsize>(a.values.size() * 8));
        }
        offset += a.values.size() * width;
    }
    if (!bin) throw DataError("short write to " + bin_path.string());
    nlohmann::json doc{{"tensors", index}, {"meta", meta}, {"endianness", "little"}, {"bytes", offset}};
    auto json_path = bin_path;
    json_path.replace_extension(".json");
    std::ofstream js(json_path);
    js << doc.dump(2) << '\n';
    if (!js) throw DataError("cannot write " + json_path.string());
}

TensorFile load_tensors(const fs::path& bin_path) {
    auto json_path = bin_path;
    json_path.replace_extension(".json");
    std::ifstream js(json_path);
    if (!js) throw CheckpointError("missing checkpoint index " + json_path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(js);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("bad checkpoint index " + json_path.string() + ": " + e.what());
    }
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw CheckpointError("missing checkpoint payload " + bin_path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

    TensorFile out;
    out.meta = doc.value("meta", nlohmann::json::object());
    try {
        for (const auto& t : doc.at("tensors")) {
            NamedArray a;
            a.name = t.at("name").get<std::string>();
            a.shape = t.at("shape").get<Shape>();
            const auto dtype = t.at("dtype").get<std::string>();
            const auto offset = t.at("offset").get<std::size_t>();
            const std::size_t n = numel(a.shape);
            const std::size_t width = dtype == "float32" ? 4 : dtype == "float64" ? 8 : 0;
            if (width == 0) throw CheckpointError("unsupported dtype '" + dtype + "' for " + a.name);
            if (offset + n * width > bytes.size()) throw CheckpointError("tensor '" + a.name + "' runs past the payload");
            a.values.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                if (width == 4) {
                    float f;
                    std::memcpy(&f, bytes.data() + offset + i * 4, 4);
                    a.values[i] = f;
                } else {
                    std::memcpy(&a.values[i], bytes.data() + offset + i * 8, 8);
                }
            }
            out.arrays.push_back(std::move(a));
        }
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("bad checkpoint index " + json_path.string() + ": " + e.what());
    }
    return out;
}

}  // namespace acousticpose::ad
