#include "acousticpose/train/windows.hpp"

#include "acousticpose/common/error.hpp"

namespace acousticpose::train {

namespace {

ad::Tensor gather(const std::vector<double>& src, std::size_t per, std::span<const std::size_t> idx, ad::Shape shape,
                  std::size_t count) {
    std::vector<double> out(idx.size() * per);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= count) throw DimensionError("window index out of range");
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(idx[i] * per), per,
                    out.begin() + static_cast<std::ptrdiff_t>(i * per));
    }
    shape.insert(shape.begin(), idx.size());
    return ad::Tensor::from(std::move(shape), std::move(out));
}

}  // namespace

void WindowSet::add(const signal::FeatureTensor& input, const signal::FeatureTensor& music, std::span<const double> poses,
                    std::size_t bgm_id, std::string id, std::string record) {
    if (empty() && bins == 0) bins = input.bins;
    if (input.channels != in_channels || input.bins != bins || input.frames != frames) {
        throw DimensionError("window input shape does not match the set");
    }
    if (music.channels != music_channels || music.bins != bins || music.frames != frames) {
        throw DimensionError("window music shape does not match the set");
    }
    if (poses.size() != frames * pose_dims) throw DimensionError("window pose length does not match the set");
    x.insert(x.end(), input.values.begin(), input.values.end());
    m.insert(m.end(), music.values.begin(), music.values.end());
    p.insert(p.end(), poses.begin(), poses.end());
    bgm.push_back(bgm_id);
    ids.push_back(std::move(id));
    records.push_back(std::move(record));
}

ad::Tensor WindowSet::batch_x(std::span<const std::size_t> idx) const {
    return gather(x, in_channels * bins * frames, idx, {in_channels, bins, frames}, size());
}

ad::Tensor WindowSet::batch_m(std::span<const std::size_t> idx) const {
    return gather(m, music_channels * bins * frames, idx, {music_channels, bins, frames}, size());
}

ad::Tensor WindowSet::batch_p(std::span<const std::size_t> idx) const {
    return gather(p, frames * pose_dims, idx, {frames, pose_dims}, size());
}

WindowSet WindowSet::subset(std::span<const std::size_t> idx) const {
    WindowSet out;
    out.in_channels = in_channels;
    out.music_channels = music_channels;
    out.bins = bins;
    out.frames = frames;
    out.pose_dims = pose_dims;
    const std::size_t px = in_channels * bins * frames, pm = music_channels * bins * frames, pp = frames * pose_dims;
    for (auto i : idx) {
        if (i >= size()) throw DimensionError("window index out of range");
        out.x.insert(out.x.end(), x.begin() + static_cast<std::ptrdiff_t>(i * px), x.begin() + static_cast<std::ptrdiff_t>((i + 1) * px));
        out.m.insert(out.m.end(), m.begin() + static_cast<std::ptrdiff_t>(i * pm), m.begin() + static_cast<std::ptrdiff_t>((i + 1) * pm));
        out.p.insert(out.p.end(), p.begin() + static_cast<std::ptrdiff_t>(i * pp), p.begin() + static_cast<std::ptrdiff_t>((i + 1) * pp));
        out.bgm.push_back(bgm[i]);
        out.ids.push_back(ids[i]);
        out.records.push_back(records[i]);
    }
    return out;
}

}  // namespace acousticpose::train
