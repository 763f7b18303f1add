#include "acousticpose/train/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numbers>
#include <set>

#include "acousticpose/common/error.hpp"
#include "acousticpose/common/random.hpp"

namespace acousticpose::train {

namespace {

bool has_pair(const std::vector<std::size_t>& batch, const std::vector<std::size_t>& bgm_ids) {
    std::set<std::size_t> seen;
    for (auto i : batch) {
        if (!seen.insert(bgm_ids[i]).second) return true;
    }
    return false;
}

}  // namespace

BatchPlan hard_negative_batches(const std::vector<std::size_t>& bgm_ids, std::size_t batch_size, std::uint64_t seed,
                                std::size_t group_size) {
    if (batch_size < 2) throw ConfigError("batch size must be at least 2");
    if (group_size < 2) throw ConfigError("hard-negative group size must be at least 2");
    BatchPlan plan;
    if (bgm_ids.empty()) return plan;
    Rng rng(derive_seed(seed, {0xBA7C}));

    std::map<std::size_t, std::vector<std::size_t>> by_bgm;
    for (std::size_t i = 0; i < bgm_ids.size(); ++i) by_bgm[bgm_ids[i]].push_back(i);

    std::vector<std::vector<std::size_t>> groups;
    for (auto& [id, items] : by_bgm) {
        std::shuffle(items.begin(), items.end(), rng);
        std::vector<std::vector<std::size_t>> mine;
        for (std::size_t s = 0; s < items.size(); s += group_size) {
            mine.emplace_back(items.begin() + static_cast<std::ptrdiff_t>(s),
                              items.begin() + static_cast<std::ptrdiff_t>(std::min(items.size(), s + group_size)));
        }
        if (mine.size() >= 2 && mine.back().size() == 1) {
            mine[mine.size() - 2].push_back(mine.back()[0]);
            mine.pop_back();
        }
        for (auto& g : mine) groups.push_back(std::move(g));
    }
    std::shuffle(groups.begin(), groups.end(), rng);

    if (bgm_ids.size() < batch_size) {
        plan.warning = "dataset has " + std::to_string(bgm_ids.size()) + " items, fewer than batch size " +
                       std::to_string(batch_size) + "; using a single smaller batch";
    }

    std::vector<std::size_t> cur;
    auto flush = [&] {
        if (!cur.empty()) plan.batches.push_back(std::move(cur));
        cur.clear();
    };
    std::deque<std::size_t> pending;
    for (auto& g : groups) {
        pending.assign(g.begin(), g.end());
        while (!pending.empty()) {
            const std::size_t room = batch_size - cur.size();
            if (pending.size() <= room) {
                cur.insert(cur.end(), pending.begin(), pending.end());
                pending.clear();
            } else {
                std::size_t take = room;
                // Never strand a single item of a group.
                if (pending.size() - take == 1 && !cur.empty()) --take;
                if (take >= 2 || cur.empty()) {
                    cur.insert(cur.end(), pending.begin(), pending.begin() + static_cast<std::ptrdiff_t>(take));
                    pending.erase(pending.begin(), pending.begin() + static_cast<std::ptrdiff_t>(take));
                } else {
                    flush();
                    continue;
                }
            }
            if (cur.size() == batch_size) flush();
        }
    }
    flush();

    const bool pairable = std::any_of(by_bgm.begin(), by_bgm.end(), [](auto& kv) { return kv.second.size() >= 2; });
    if (pairable) {
        for (std::size_t b = 0; b < plan.batches.size() && plan.batches.size() > 1;) {
            if (has_pair(plan.batches[b], bgm_ids)) {
                ++b;
                continue;
            }
            const std::size_t into = b > 0 ? b - 1 : b + 1;
            auto& dst = plan.batches[into];
            dst.insert(dst.end(), plan.batches[b].begin(), plan.batches[b].end());
            plan.batches.erase(plan.batches.begin() + static_cast<std::ptrdiff_t>(b));
            if (b > 0) --b;
        }
    }
    for (const auto& batch : plan.batches) {
        std::vector<std::size_t> ids;
        for (auto i : batch) ids.push_back(bgm_ids[i]);
        plan.bgm_ids.push_back(std::move(ids));
    }
    return plan;
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr_max, double lr_min) {
    if (total_steps == 0) return lr_max;
    const double frac = static_cast<double>(std::min(step, total_steps)) / static_cast<double>(total_steps);
    return lr_min + (lr_max - lr_min) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

std::vector<ad::NamedArray> AdamState::snapshot(const ad::ParamStore& params) const {
    std::vector<ad::NamedArray> out;
    const auto& e = params.entries();
    for (std::size_t i = 0; i < e.size() && i < m.size(); ++i) {
        out.push_back({"adam.m." + e[i].name, e[i].tensor.shape(), m[i]});
        out.push_back({"adam.v." + e[i].name, e[i].tensor.shape(), v[i]});
    }
    return out;
}

void AdamState::restore(const ad::ParamStore& params, const std::vector<ad::NamedArray>& m_arrays,
                        const std::vector<ad::NamedArray>& v_arrays, std::uint64_t steps) {
    auto pick = [&](const std::vector<ad::NamedArray>& arrays, const std::string& name, const ad::Shape& shape) {
        for (const auto& a : arrays) {
            if (a.name == name) {
                if (a.shape != shape) throw CheckpointError("optimizer state '" + name + "' has the wrong shape");
                return a.values;
            }
        }
        throw CheckpointError("optimizer state lacks '" + name + "'");
    };
    m.clear();
    v.clear();
    for (const auto& e : params.entries()) {
        m.push_back(pick(m_arrays, e.name, e.tensor.shape()));
        v.push_back(pick(v_arrays, e.name, e.tensor.shape()));
    }
    step = steps;
}

bool adam_step(ad::ParamStore& params, AdamState& state, double lr, const AdamConfig& cfg) {
    auto& entries = params.entries();
    for (const auto& e : entries) {
        for (double g : e.tensor.grad()) {
            if (!std::isfinite(g)) return false;
        }
    }
    if (state.m.size() != entries.size()) {
        state.m.clear();
        state.v.clear();
        for (const auto& e : entries) {
            state.m.emplace_back(e.tensor.numel(), 0.0);
            state.v.emplace_back(e.tensor.numel(), 0.0);
        }
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto& t = entries[i].tensor;
        auto& w = t.mutable_data();
        const auto g = t.grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double gk = g.empty() ? 0.0 : g[k];
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
            w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.eps);
        }
    }
    return true;
}

void ema_update(std::vector<ad::NamedArray>& shadow, const ad::ParamStore& params, double decay) {
    const auto& e = params.entries();
    if (shadow.size() != e.size()) throw CheckpointError("EMA shadow and parameters hold different tensor sets");
    for (std::size_t i = 0; i < e.size(); ++i) {
        if (shadow[i].name != e[i].name || shadow[i].shape != e[i].tensor.shape()) {
            throw CheckpointError("EMA shadow tensor '" + shadow[i].name + "' does not match parameter '" + e[i].name + "'");
        }
        const auto p = e[i].tensor.data();
        for (std::size_t k = 0; k < p.size(); ++k) shadow[i].values[k] = decay * shadow[i].values[k] + (1.0 - decay) * p[k];
    }
}

}  // namespace acousticpose::train
