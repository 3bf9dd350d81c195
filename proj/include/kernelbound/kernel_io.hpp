#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "solver.hpp"

namespace kernelbound {

// Binary kernel file, all fields little-endian:
//   char[4] "KBKF", u32 version, u32 d, u32 m, f64 R, f64 h,
//   f64 source[2], u32 source_component, u32 variant, f64 time, f64 mollifier, u64 count,
//   then count f64 values: component 0 on every interior node (row-major), then component 1, ...
namespace io_detail {

template <class T>
void put(std::ostream& os, T v) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  os.write(buf, sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  char buf[sizeof(T)];
  if (!is.read(buf, sizeof(T))) throw Error("kernel file is truncated");
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace io_detail

inline void write_kernel_binary(const KernelField& kf, const std::string& path) {
  using namespace io_detail;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path);
  const GridSpec& g = kf.grid();
  os.write("KBKF", 4);
  put<std::uint32_t>(os, 1);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(g.d));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(kf.field.m));
  put<double>(os, g.R);
  put<double>(os, g.h);
  const Vec y = g.coord(kf.source_node);
  put<double>(os, y[0]);
  put<double>(os, g.d > 1 ? y[1] : 0.0);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(kf.source_component));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(kf.variant));
  put<double>(os, kf.time());
  put<double>(os, kf.mollifier);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(g.nodes() * kf.field.m));
  for (int c = 0; c < kf.field.m; ++c)
    for (std::size_t i = 0; i < g.nodes(); ++i) put<double>(os, kf(c, i));
  if (!os) throw Error("write failed for " + path);
}

inline KernelField read_kernel_binary(const std::string& path) {
  using namespace io_detail;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "KBKF", 4) != 0) throw Error(path + " is not a kernel file");
  if (get<std::uint32_t>(is) != 1) throw Error("unsupported kernel file version");
  GridSpec g;
  g.d = static_cast<int>(get<std::uint32_t>(is));
  const int m = static_cast<int>(get<std::uint32_t>(is));
  g.R = get<double>(is);
  g.h = get<double>(is);
  g.validate();
  Vec y(g.d);
  y[0] = get<double>(is);
  const double y1 = get<double>(is);
  if (g.d > 1) y[1] = y1;
  KernelField kf;
  kf.source_node = g.node_of(y);
  kf.source_component = static_cast<int>(get<std::uint32_t>(is));
  kf.variant = static_cast<Variant>(get<std::uint32_t>(is));
  kf.field = DiscreteField(g, m);
  kf.field.time = get<double>(is);
  kf.mollifier = get<double>(is);
  if (get<std::uint64_t>(is) != g.nodes() * m) throw Error("kernel file payload size does not match its grid");
  for (int c = 0; c < m; ++c)
    for (std::size_t i = 0; i < g.nodes(); ++i) kf.field(c, i) = get<double>(is);
  return kf;
}

inline void write_kernel_csv(const KernelField& kf, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path);
  const GridSpec& g = kf.grid();
  os << (g.d == 1 ? "x" : "x,y");
  for (int c = 0; c < kf.field.m; ++c) os << ",p_" << c + 1;
  os << "\n";
  os.precision(12);
  for (std::size_t i = 0; i < g.nodes(); ++i) {
    const Vec x = g.coord(i);
    os << x[0];
    if (g.d > 1) os << "," << x[1];
    for (int c = 0; c < kf.field.m; ++c) os << "," << kf(c, i);
    os << "\n";
  }
}

}  // namespace kernelbound
