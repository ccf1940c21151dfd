#pragma once

// Grid containers and the voxel-index coordinate convention shared by every
// module: integer coordinates are voxel centres, index order is (c, h, w, d)
// with d varying fastest, and samples outside the lattice read as zero.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace pw {

struct Dims {
    std::size_t h = 1;
    std::size_t w = 1;
    std::size_t d = 1;

    std::size_t voxels() const { return h * w * d; }
    std::size_t index(std::size_t i, std::size_t j, std::size_t k) const { return (i * w + j) * d + k; }
    bool operator==(const Dims&) const = default;
};

using Spacing = std::array<double, 3>;

struct Coord {
    double h = 0.0;
    double w = 0.0;
    double d = 0.0;

    Coord operator+(const Coord& o) const { return {h + o.h, w + o.w, d + o.d}; }
    Coord operator-(const Coord& o) const { return {h - o.h, w - o.w, d - o.d}; }
    Coord operator*(double s) const { return {h * s, w * s, d * s}; }
    double operator[](std::size_t axis) const { return axis == 0 ? h : (axis == 1 ? w : d); }
    double& operator[](std::size_t axis) { return axis == 0 ? h : (axis == 1 ? w : d); }
    bool operator==(const Coord&) const = default;
};

double norm(const Coord& c);

// C-channel real-valued grid. Core math runs in double; files store f32.
class Volume {
  public:
    Volume() = default;
    Volume(std::size_t channels, Dims dims, Spacing spacing = {1.0, 1.0, 1.0});
    Volume(std::size_t channels, Dims dims, std::vector<double> data, Spacing spacing = {1.0, 1.0, 1.0});

    std::size_t channels() const { return channels_; }
    const Dims& dims() const { return dims_; }
    const Spacing& spacing() const { return spacing_; }
    void set_spacing(const Spacing& s) { spacing_ = s; }

    double& at(std::size_t c, std::size_t h, std::size_t w, std::size_t d) { return data_[offset(c) + dims_.index(h, w, d)]; }
    double at(std::size_t c, std::size_t h, std::size_t w, std::size_t d) const { return data_[offset(c) + dims_.index(h, w, d)]; }

    std::span<double> channel(std::size_t c) { return {data_.data() + offset(c), dims_.voxels()}; }
    std::span<const double> channel(std::size_t c) const { return {data_.data() + offset(c), dims_.voxels()}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    // Throws NumericError naming the first non-finite voxel.
    void check_finite(const char* what) const;

  private:
    std::size_t offset(std::size_t c) const { return c * dims_.voxels(); }

    std::size_t channels_ = 0;
    Dims dims_{};
    Spacing spacing_{1.0, 1.0, 1.0};
    std::vector<double> data_;
};

// Integer class map; 0 is background, organs are 1..C_cls.
class LabelMap {
  public:
    LabelMap() = default;
    explicit LabelMap(Dims dims, Spacing spacing = {1.0, 1.0, 1.0});
    LabelMap(Dims dims, std::vector<std::uint8_t> labels, Spacing spacing = {1.0, 1.0, 1.0});

    const Dims& dims() const { return dims_; }
    const Spacing& spacing() const { return spacing_; }
    void set_spacing(const Spacing& s) { spacing_ = s; }

    std::uint8_t& at(std::size_t h, std::size_t w, std::size_t d) { return labels_[dims_.index(h, w, d)]; }
    std::uint8_t at(std::size_t h, std::size_t w, std::size_t d) const { return labels_[dims_.index(h, w, d)]; }

    std::vector<std::uint8_t>& labels() { return labels_; }
    const std::vector<std::uint8_t>& labels() const { return labels_; }

    std::uint8_t max_label() const;
    bool operator==(const LabelMap& o) const { return dims_ == o.dims_ && labels_ == o.labels_; }

  private:
    Dims dims_{};
    Spacing spacing_{1.0, 1.0, 1.0};
    std::vector<std::uint8_t> labels_;
};

// Structure-of-arrays coordinate field, one source coordinate per voxel.
struct CoordField {
    Dims dims{};
    std::vector<double> h, w, d;

    CoordField() = default;
    explicit CoordField(Dims dims_);
    Coord at(std::size_t voxel) const { return {h[voxel], w[voxel], d[voxel]}; }
};

// Field whose value at every voxel is the voxel's own lattice coordinate.
CoordField lattice_field(Dims dims);

double trilinear_sample(const Volume& vol, std::size_t channel, const Coord& p);

// Spatial derivative of trilinear_sample, using the cell selected by floor()
// (right-continuous at integer coordinates).
Coord trilinear_gradient(const Volume& vol, std::size_t channel, const Coord& p);

// Adjoint of sampling with respect to the voxel values: accumulates
// weight * upstream[v] into grad at the 8 corners of field[v].
void trilinear_scatter(std::span<double> grad, const Dims& dims, const CoordField& field, std::span<const double> upstream);

// out(c, p) = trilinear_sample(vol, c, field[p]) for every channel.
Volume resample(const Volume& vol, const CoordField& field);

Volume one_hot(const LabelMap& lm, std::size_t c_cls);

inline constexpr double kBackgroundThreshold = 0.5;

// Per voxel: 1 + index of the max channel if that max exceeds the threshold,
// otherwise background. Ties go to the lowest channel.
LabelMap channel_argmax(const Volume& vol, double background_threshold = kBackgroundThreshold);

} // namespace pw
