#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rgbdvos/errors.hpp"
#include "rgbdvos/image.hpp"
#include "rgbdvos/png_io.hpp"

namespace rgbdvos {

// Single-object boolean raster.
struct BinaryMask {
    int width = 0, height = 0;
    int object_id = 1;
    std::vector<std::uint8_t> data;  // 0/1, row-major

    BinaryMask() = default;
    BinaryMask(int w, int h, int id = 1)
        : width(w), height(h), object_id(id), data(static_cast<std::size_t>(w * h), 0) {}

    bool at(int x, int y) const { return data[static_cast<std::size_t>(y * width + x)] != 0; }
    void set(int x, int y, bool v = true) {
        data[static_cast<std::size_t>(y * width + x)] = v ? 1 : 0;
    }
    bool same_shape(const BinaryMask& o) const { return width == o.width && height == o.height; }
};

// Pixel-inclusive axis-aligned box.
struct BoundingBox {
    int x_min = 0, y_min = 0, x_max = 0, y_max = 0;

    int width() const { return x_max - x_min + 1; }
    int height() const { return y_max - y_min + 1; }
    long long area() const { return static_cast<long long>(width()) * height(); }
    bool contains(double x, double y) const {
        return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
    }

    BoundingBox clipped(int img_w, int img_h) const {
        BoundingBox b = *this;
        b.x_min = std::clamp(b.x_min, 0, img_w - 1);
        b.x_max = std::clamp(b.x_max, 0, img_w - 1);
        b.y_min = std::clamp(b.y_min, 0, img_h - 1);
        b.y_max = std::clamp(b.y_max, 0, img_h - 1);
        return b;
    }

    // Scales width/height by `factor` about the box center.
    BoundingBox expanded(double factor) const {
        double cx = 0.5 * (x_min + x_max);
        double cy = 0.5 * (y_min + y_max);
        double hw = 0.5 * (x_max - x_min + 1) * factor;
        double hh = 0.5 * (y_max - y_min + 1) * factor;
        BoundingBox b;
        b.x_min = static_cast<int>(std::floor(cx - hw + 0.5));
        b.x_max = static_cast<int>(std::floor(cx + hw - 0.5));
        b.y_min = static_cast<int>(std::floor(cy - hh + 0.5));
        b.y_max = static_cast<int>(std::floor(cy + hh - 0.5));
        return b;
    }

    bool operator==(const BoundingBox& o) const {
        return x_min == o.x_min && y_min == o.y_min && x_max == o.x_max && y_max == o.y_max;
    }
};

enum class PointLabel { foreground, background };

struct PromptPoint {
    double x = 0, y = 0;
    PointLabel label = PointLabel::foreground;
};

// One box plus one or more labeled points, image-pixel coordinates.
struct MixedPrompt {
    BoundingBox box;
    std::vector<PromptPoint> points;

    void validate() const {
        if (points.empty()) throw Error("mixed prompt requires at least one point");
        if (box.area() < 1) throw Error("mixed prompt requires a non-degenerate box");
    }
};

// One timestep of an RGB-D sequence.
struct RGBDFrame {
    int index = 0;
    ImageRgb8 rgb;
    DepthU16 depth;
    std::optional<LabelRaster> gt_mask;
};

// Ordered frames plus the frame-0 annotation. Ground-truth access after
// loading goes through gt_mask() so tests can audit reads.
struct SequenceDataset {
    std::vector<RGBDFrame> frames;
    LabelRaster first_frame_annotation;
    int object_count = 0;
    std::string name;

    mutable std::vector<int> gt_access_log;

    const LabelRaster* gt_mask(int frame_index) const {
        for (const auto& f : frames) {
            if (f.index == frame_index) {
                gt_access_log.push_back(frame_index);
                return f.gt_mask ? &*f.gt_mask : nullptr;
            }
        }
        return nullptr;
    }

    bool has_gt(int frame_index) const {
        for (const auto& f : frames)
            if (f.index == frame_index) return f.gt_mask.has_value();
        return false;
    }
};

// ---------------------------------------------------------------------------
// Mask geometry
// ---------------------------------------------------------------------------

inline long long mask_area(const BinaryMask& m) {
    long long n = 0;
    for (auto v : m.data) n += (v != 0);
    return n;
}

struct Point2 {
    double x = 0, y = 0;
};

inline double distance(const Point2& a, const Point2& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

// Mean coordinate over all true pixels.
inline Point2 mask_centroid_all(const BinaryMask& m) {
    long long n = 0;
    double sx = 0, sy = 0;
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m.at(x, y)) {
                sx += x;
                sy += y;
                ++n;
            }
    if (n == 0) throw EmptyMaskError();
    return {sx / n, sy / n};
}

// Centroid of the largest 4-connected component; ties break toward the
// component seen first in raster order.
inline Point2 mask_centroid(const BinaryMask& m) {
    if (mask_area(m) == 0) throw EmptyMaskError();
    std::vector<int> comp(static_cast<std::size_t>(m.width * m.height), -1);
    int best_size = 0;
    Point2 best{};
    int comp_id = 0;
    std::vector<int> stack;
    for (int start = 0; start < m.width * m.height; ++start) {
        if (!m.data[static_cast<std::size_t>(start)] || comp[static_cast<std::size_t>(start)] >= 0)
            continue;
        int size = 0;
        double sx = 0, sy = 0;
        stack.push_back(start);
        comp[static_cast<std::size_t>(start)] = comp_id;
        while (!stack.empty()) {
            int p = stack.back();
            stack.pop_back();
            int x = p % m.width, y = p / m.width;
            ++size;
            sx += x;
            sy += y;
            const int nx[4] = {x - 1, x + 1, x, x};
            const int ny[4] = {y, y, y - 1, y + 1};
            for (int k = 0; k < 4; ++k) {
                if (nx[k] < 0 || nx[k] >= m.width || ny[k] < 0 || ny[k] >= m.height) continue;
                int q = ny[k] * m.width + nx[k];
                if (m.data[static_cast<std::size_t>(q)] && comp[static_cast<std::size_t>(q)] < 0) {
                    comp[static_cast<std::size_t>(q)] = comp_id;
                    stack.push_back(q);
                }
            }
        }
        if (size > best_size) {
            best_size = size;
            best = {sx / size, sy / size};
        }
        ++comp_id;
    }
    return best;
}

// Tightest axis-aligned box over all true pixels.
inline BoundingBox mask_bbox(const BinaryMask& m) {
    int xmin = m.width, ymin = m.height, xmax = -1, ymax = -1;
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m.at(x, y)) {
                xmin = std::min(xmin, x);
                xmax = std::max(xmax, x);
                ymin = std::min(ymin, y);
                ymax = std::max(ymax, y);
            }
    if (xmax < 0) throw EmptyMaskError();
    return {xmin, ymin, xmax, ymax};
}

// ---------------------------------------------------------------------------
// Label raster <-> per-object masks
// ---------------------------------------------------------------------------

inline BinaryMask mask_from_labels(const LabelRaster& labels, int object_id) {
    BinaryMask m(labels.width, labels.height, object_id);
    for (std::size_t i = 0; i < labels.px.size(); ++i)
        m.data[i] = labels.px[i] == object_id ? 1 : 0;
    return m;
}

// Overlaps resolve with the higher label winning.
inline LabelRaster labels_from_masks(const std::vector<BinaryMask>& masks, int width, int height) {
    LabelRaster out(width, height);
    for (const auto& m : masks) {
        if (m.width != width || m.height != height) throw ShapeError("mask/label size mismatch");
        for (std::size_t i = 0; i < m.data.size(); ++i)
            if (m.data[i] && m.object_id > out.px[i])
                out.px[i] = static_cast<std::uint8_t>(m.object_id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sequence ingestion
// ---------------------------------------------------------------------------

namespace detail {

inline std::string frame_file(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%05d.png", index);
    return buf;
}

inline std::optional<int> parse_frame_index(const std::filesystem::path& p) {
    if (p.extension() != ".png") return std::nullopt;
    const std::string stem = p.stem().string();
    if (stem.size() != 5 || !std::all_of(stem.begin(), stem.end(), [](char c) {
            return c >= '0' && c <= '9';
        }))
        return std::nullopt;
    return std::stoi(stem);
}

inline void validate_annotation(const LabelRaster& ann) {
    int n = ann.max_label();
    if (n == 0) throw AnnotationError("frame-0 annotation has no objects");
    std::vector<bool> present(static_cast<std::size_t>(n) + 1, false);
    for (auto v : ann.px) present[v] = true;
    for (int k = 1; k <= n; ++k)
        if (!present[static_cast<std::size_t>(k)])
            throw AnnotationError("labels not contiguous: missing " + std::to_string(k));
}

}  // namespace detail

// Loads `root/rgb/%05d.png`, `root/depth/%05d.png`, `root/masks/%05d.png`.
// The frame-0 mask is the required first-frame annotation.
inline SequenceDataset load_sequence(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root / "rgb") || !fs::is_directory(root / "depth"))
        throw IoError("sequence needs rgb/ and depth/ under " + root.string());

    std::vector<int> indices;
    for (const auto& e : fs::directory_iterator(root / "rgb"))
        if (auto idx = detail::parse_frame_index(e.path())) indices.push_back(*idx);
    for (const auto& e : fs::directory_iterator(root / "depth"))
        if (auto idx = detail::parse_frame_index(e.path())) indices.push_back(*idx);
    std::sort(indices.begin(), indices.end());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
    if (indices.empty()) throw IoError("no frames in " + root.string());

    SequenceDataset ds;
    ds.name = root.filename().string();
    for (int idx : indices) {
        fs::path rgb_path = root / "rgb" / detail::frame_file(idx);
        fs::path depth_path = root / "depth" / detail::frame_file(idx);
        if (!fs::exists(rgb_path)) throw IngestError(idx, "missing " + rgb_path.string());
        if (!fs::exists(depth_path)) throw IngestError(idx, "missing " + depth_path.string());

        RGBDFrame f;
        f.index = idx;
        f.rgb = read_rgb8(rgb_path);
        f.depth = read_depth16(depth_path);
        if (f.rgb.width != f.depth.width || f.rgb.height != f.depth.height)
            throw ShapeError("rgb/depth resolution mismatch at frame " + std::to_string(idx));

        fs::path mask_path = root / "masks" / detail::frame_file(idx);
        if (fs::exists(mask_path)) {
            LabelRaster labels = read_labels(mask_path);
            if (labels.width != f.rgb.width || labels.height != f.rgb.height)
                throw ShapeError("mask resolution mismatch at frame " + std::to_string(idx));
            f.gt_mask = std::move(labels);
        }
        ds.frames.push_back(std::move(f));
    }

    if (ds.frames.front().index != 0 || !ds.frames.front().gt_mask)
        throw AnnotationError("masks/00000.png is required");
    ds.first_frame_annotation = *ds.frames.front().gt_mask;
    detail::validate_annotation(ds.first_frame_annotation);
    ds.object_count = ds.first_frame_annotation.max_label();
    return ds;
}

// Writes a dataset back out in the on-disk layout (GT masks included).
inline void write_sequence(const SequenceDataset& ds, const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    fs::create_directories(root / "rgb");
    fs::create_directories(root / "depth");
    fs::create_directories(root / "masks");
    for (const auto& f : ds.frames) {
        write_rgb8(root / "rgb" / detail::frame_file(f.index), f.rgb);
        write_depth16(root / "depth" / detail::frame_file(f.index), f.depth);
        if (f.gt_mask) write_labels(root / "masks" / detail::frame_file(f.index), *f.gt_mask);
    }
}

}  // namespace rgbdvos
