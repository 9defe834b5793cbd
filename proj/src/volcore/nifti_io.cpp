#include "volcore/nifti_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <string>

#include <json.hpp>

#include "core/fsutil.hpp"

namespace ghc {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

#pragma pack(push, 1)
struct Nifti1Header {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope, scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code, sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4], srow_y[4], srow_z[4];
  char intent_name[16];
  char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

constexpr std::int16_t kUint8 = 2;
constexpr std::int16_t kInt16 = 4;
constexpr std::int16_t kInt32 = 8;
constexpr std::int16_t kFloat32 = 16;
constexpr std::int16_t kFloat64 = 64;
constexpr std::int16_t kUint16 = 512;
constexpr int kDataOffset = 352;

template <typename T>
T byteswap_value(T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  std::reverse(bytes, bytes + sizeof(T));
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

void swap_header(Nifti1Header& h) {
  h.sizeof_hdr = byteswap_value(h.sizeof_hdr);
  for (auto& d : h.dim) d = byteswap_value(d);
  h.datatype = byteswap_value(h.datatype);
  h.bitpix = byteswap_value(h.bitpix);
  for (auto& p : h.pixdim) p = byteswap_value(p);
  h.vox_offset = byteswap_value(h.vox_offset);
  h.scl_slope = byteswap_value(h.scl_slope);
  h.scl_inter = byteswap_value(h.scl_inter);
  h.qform_code = byteswap_value(h.qform_code);
  h.sform_code = byteswap_value(h.sform_code);
  h.quatern_b = byteswap_value(h.quatern_b);
  h.quatern_c = byteswap_value(h.quatern_c);
  h.quatern_d = byteswap_value(h.quatern_d);
  h.qoffset_x = byteswap_value(h.qoffset_x);
  h.qoffset_y = byteswap_value(h.qoffset_y);
  h.qoffset_z = byteswap_value(h.qoffset_z);
  for (int i = 0; i < 4; ++i) {
    h.srow_x[i] = byteswap_value(h.srow_x[i]);
    h.srow_y[i] = byteswap_value(h.srow_y[i]);
    h.srow_z[i] = byteswap_value(h.srow_z[i]);
  }
}

// Array axis order placed on world (x, y, z): sagittal axis first, the rest in order.
std::array<int, 3> world_axis_order(int sagittal) {
  std::array<int, 3> order{sagittal, 0, 0};
  int w = 1;
  for (int a = 0; a < 3; ++a) {
    if (a != sagittal) order[w++] = a;
  }
  return order;
}

Nifti1Header make_header(const GridGeometry& g, std::int16_t datatype, std::int16_t bitpix) {
  Nifti1Header h{};
  h.sizeof_hdr = 348;
  h.regular = 'r';
  h.dim[0] = 3;
  h.dim[1] = static_cast<std::int16_t>(g.shape.nx);
  h.dim[2] = static_cast<std::int16_t>(g.shape.ny);
  h.dim[3] = static_cast<std::int16_t>(g.shape.nz);
  for (int i = 4; i < 8; ++i) h.dim[i] = 1;
  h.datatype = datatype;
  h.bitpix = bitpix;
  h.pixdim[0] = 1.0f;
  for (int a = 0; a < 3; ++a) h.pixdim[a + 1] = static_cast<float>(g.spacing[a]);
  for (int i = 4; i < 8; ++i) h.pixdim[i] = 1.0f;
  h.vox_offset = static_cast<float>(kDataOffset);
  h.scl_slope = 1.0f;
  h.scl_inter = 0.0f;
  h.xyzt_units = 2;  // mm
  std::strncpy(h.descrip, "ghcascade", sizeof(h.descrip) - 1);
  if (g.sagittal_axis) {
    const auto order = world_axis_order(*g.sagittal_axis);
    float* rows[3] = {h.srow_x, h.srow_y, h.srow_z};
    for (int w = 0; w < 3; ++w) {
      const int a = order[w];
      for (int c = 0; c < 4; ++c) rows[w][c] = 0.0f;
      rows[w][a] = static_cast<float>(g.spacing[a]);
      rows[w][3] = static_cast<float>(g.origin[a]);
    }
    h.sform_code = 1;
    if (*g.sagittal_axis == 0) {
      h.qform_code = 1;
      h.qoffset_x = static_cast<float>(g.origin.x());
      h.qoffset_y = static_cast<float>(g.origin.y());
      h.qoffset_z = static_cast<float>(g.origin.z());
    }
  }
  std::memcpy(h.magic, "n+1\0", 4);
  return h;
}

struct Decoded {
  GridGeometry geom;
  std::vector<double> values;
};

Decoded decode(const fs::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < sizeof(Nifti1Header)) fail(ErrorCode::format_error, path.string() + ": truncated NIfTI header");
  Nifti1Header h;
  std::memcpy(&h, bytes.data(), sizeof(h));
  bool swapped = false;
  if (h.sizeof_hdr != 348) {
    swap_header(h);
    swapped = true;
    if (h.sizeof_hdr != 348) fail(ErrorCode::format_error, path.string() + ": bad sizeof_hdr");
  }
  if (std::memcmp(h.magic, "n+1\0", 4) != 0) fail(ErrorCode::format_error, path.string() + ": missing n+1 magic");
  if (h.dim[0] < 1 || h.dim[0] > 7) fail(ErrorCode::format_error, path.string() + ": bad dim[0]");
  for (int i = 4; i <= h.dim[0]; ++i) {
    if (h.dim[i] > 1) fail(ErrorCode::format_error, path.string() + ": only 3D volumes are supported");
  }

  Decoded out;
  GridGeometry& g = out.geom;
  for (int a = 0; a < 3; ++a) {
    const int n = a < h.dim[0] ? h.dim[a + 1] : 1;
    if (n < 1) fail(ErrorCode::format_error, path.string() + ": non-positive dimension");
    g.shape[a] = n;
    const float p = std::fabs(h.pixdim[a + 1]);
    g.spacing[a] = p > 0.0f ? p : 1.0;
  }

  if (h.sform_code > 0) {
    const float* rows[3] = {h.srow_x, h.srow_y, h.srow_z};
    int sag = 0;
    for (int a = 1; a < 3; ++a) {
      if (std::fabs(rows[0][a]) > std::fabs(rows[0][sag])) sag = a;
    }
    g.sagittal_axis = sag;
    const auto order = world_axis_order(sag);
    for (int w = 0; w < 3; ++w) g.origin[order[w]] = rows[w][3];
  } else if (h.qform_code > 0) {
    // Rotation from the quaternion; sagittal axis = column dominating world x.
    const double b = h.quatern_b, c = h.quatern_c, d = h.quatern_d;
    const double a = std::sqrt(std::max(0.0, 1.0 - (b * b + c * c + d * d)));
    const double r00 = a * a + b * b - c * c - d * d;
    const double r01 = 2 * (b * c - a * d);
    const double r02 = 2 * (b * d + a * c);
    const double col[3] = {std::fabs(r00), std::fabs(r01), std::fabs(r02)};
    g.sagittal_axis = static_cast<int>(std::max_element(col, col + 3) - col);
    g.origin = Eigen::Vector3d(h.qoffset_x, h.qoffset_y, h.qoffset_z);
  } else {
    g.sagittal_axis.reset();
  }

  const std::size_t n = g.shape.voxels();
  const std::size_t offset = h.vox_offset >= kDataOffset ? static_cast<std::size_t>(h.vox_offset) : kDataOffset;
  std::size_t elem = 0;
  switch (h.datatype) {
    case kUint8: elem = 1; break;
    case kInt16:
    case kUint16: elem = 2; break;
    case kInt32:
    case kFloat32: elem = 4; break;
    case kFloat64: elem = 8; break;
    default: fail(ErrorCode::format_error, path.string() + ": unsupported datatype " + std::to_string(h.datatype));
  }
  if (bytes.size() < offset + n * elem) fail(ErrorCode::format_error, path.string() + ": truncated voxel payload");
  const char* src = bytes.data() + offset;
  out.values.resize(n);
  auto fetch = [&]<typename T>(T*) {
    for (std::size_t i = 0; i < n; ++i) {
      T v;
      std::memcpy(&v, src + i * sizeof(T), sizeof(T));
      if (swapped) v = byteswap_value(v);
      out.values[i] = static_cast<double>(v);
    }
  };
  switch (h.datatype) {
    case kUint8: fetch(static_cast<std::uint8_t*>(nullptr)); break;
    case kInt16: fetch(static_cast<std::int16_t*>(nullptr)); break;
    case kUint16: fetch(static_cast<std::uint16_t*>(nullptr)); break;
    case kInt32: fetch(static_cast<std::int32_t*>(nullptr)); break;
    case kFloat32: fetch(static_cast<float*>(nullptr)); break;
    case kFloat64: fetch(static_cast<double*>(nullptr)); break;
    default: break;
  }
  if (h.scl_slope != 0.0f && !(h.scl_slope == 1.0f && h.scl_inter == 0.0f)) {
    for (auto& v : out.values) v = v * h.scl_slope + h.scl_inter;
  }
  return out;
}

void write_sidecar(const fs::path& path, const GridGeometry& g) {
  json j;
  j["laterality"] = to_string(g.laterality);
  j["spacing_mm"] = {g.spacing.x(), g.spacing.y(), g.spacing.z()};
  j["origin_mm"] = {g.origin.x(), g.origin.y(), g.origin.z()};
  j["sagittal_axis"] = g.sagittal_axis ? json(*g.sagittal_axis) : json(nullptr);
  atomic_write(sidecar_path(path), j.dump(2) + "\n");
}

void apply_sidecar(const fs::path& path, GridGeometry& g) {
  const fs::path side = sidecar_path(path);
  if (!fs::exists(side)) return;
  json j;
  try {
    j = json::parse(read_file(side));
  } catch (const json::exception& e) {
    fail(ErrorCode::format_error, side.string() + ": " + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::format_error, side.string() + ": sidecar must be a JSON object");
  if (j.contains("laterality")) g.laterality = laterality_from_string(j.at("laterality").get<std::string>());
  // Full-precision geometry wins when it agrees with the header to float precision.
  auto refine = [&](const char* key, Eigen::Vector3d& target, bool allow_replace) {
    if (!j.contains(key)) return;
    const auto& arr = j.at(key);
    if (!arr.is_array() || arr.size() != 3) fail(ErrorCode::format_error, side.string() + ": bad " + key);
    Eigen::Vector3d v(arr[0].get<double>(), arr[1].get<double>(), arr[2].get<double>());
    const double tol = 1e-4 * std::max(1.0, v.cwiseAbs().maxCoeff());
    if (allow_replace || (v - target).cwiseAbs().maxCoeff() <= tol) target = v;
  };
  refine("spacing_mm", g.spacing, false);
  refine("origin_mm", g.origin, !g.sagittal_axis.has_value());
  if (j.contains("sagittal_axis") && j.at("sagittal_axis").is_null()) g.sagittal_axis.reset();
}

std::string encode(const GridGeometry& g, std::int16_t datatype, std::int16_t bitpix, const void* payload,
                   std::size_t payload_bytes) {
  const Nifti1Header h = make_header(g, datatype, bitpix);
  std::string bytes(kDataOffset + payload_bytes, '\0');
  std::memcpy(bytes.data(), &h, sizeof(h));
  std::memcpy(bytes.data() + kDataOffset, payload, payload_bytes);
  return bytes;
}

void check_writable(const GridGeometry& g) {
  g.validate();
  for (int a = 0; a < 3; ++a) {
    if (g.shape[a] > 32767) fail(ErrorCode::format_error, "dimension exceeds NIfTI-1 int16 limit");
  }
}

}  // namespace

fs::path sidecar_path(const fs::path& nifti_path) {
  fs::path p = nifti_path;
  p.replace_extension(".json");
  return p;
}

void write_volume(const fs::path& path, const Volume& vol) {
  static_assert(std::endian::native == std::endian::little, "writer assumes a little-endian host");
  check_writable(vol.geometry());
  atomic_write(path, encode(vol.geometry(), kFloat32, 32, vol.data().data(), vol.size() * sizeof(float)));
  write_sidecar(path, vol.geometry());
}

Volume read_volume(const fs::path& path) {
  Decoded d = decode(path);
  apply_sidecar(path, d.geom);
  std::vector<float> data(d.values.size());
  std::transform(d.values.begin(), d.values.end(), data.begin(), [](double v) { return static_cast<float>(v); });
  return Volume(d.geom, std::move(data));
}

void write_labelmap(const fs::path& path, const LabelMap& labels) {
  check_writable(labels.geometry());
  validate_labels(labels);
  atomic_write(path, encode(labels.geometry(), kUint8, 8, labels.data().data(), labels.size()));
  write_sidecar(path, labels.geometry());
}

LabelMap read_labelmap(const fs::path& path) {
  Decoded d = decode(path);
  apply_sidecar(path, d.geom);
  std::vector<std::uint8_t> data(d.values.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double v = d.values[i];
    if (v < 0.0 || v >= label::count || v != std::floor(v)) {
      fail(ErrorCode::format_error, path.string() + ": label payload holds non-class value");
    }
    data[i] = static_cast<std::uint8_t>(v);
  }
  return LabelMap(d.geom, std::move(data));
}

}  // namespace ghc
