#include "flowlab/grid_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <ostream>

#include <fmt/format.h>

namespace flowlab {

namespace {

static_assert(std::endian::native == std::endian::little, "grid dumps assume a little-endian host");

constexpr std::array<char, 8> kMagic = {'F', 'L', 'O', 'W', 'G', 'R', 'I', 'D'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw Error("grid dump: truncated input");
    return value;
}

}  // namespace

void write_grid_csv(std::ostream& out, const GridDensity& grid) {
    const std::size_t d = grid.dim();
    if (d == 2) {
        out << "x,y,mass\n";
    } else {
        for (std::size_t k = 0; k < d; ++k) out << 'x' << k << ',';
        out << "mass\n";
    }
    for (std::size_t i = 0; i < grid.cell_count(); ++i) {
        for (double c : grid.cell_center(i)) out << fmt::format("{:.17g},", c);
        out << fmt::format("{:.17g}\n", grid.masses[i]);
    }
}

void write_grid_binary(std::ostream& out, const GridDensity& grid) {
    out.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(grid.dim()));
    for (auto e : grid.extents) put<std::uint64_t>(out, e);
    for (double o : grid.origin) put<double>(out, o);
    for (double a : grid.spacing) put<double>(out, a);
    out.write(reinterpret_cast<const char*>(grid.masses.data()),
              static_cast<std::streamsize>(grid.masses.size() * sizeof(double)));
    if (!out) throw Error("grid dump: write failed");
}

GridDensity read_grid_binary(std::istream& in) {
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) throw Error("grid dump: bad magic");
    const auto version = get<std::uint32_t>(in);
    if (version != kVersion) throw Error(fmt::format("grid dump: unsupported version {}", version));
    const auto d = get<std::uint32_t>(in);
    if (d == 0 || d > 16) throw Error(fmt::format("grid dump: implausible dimension {}", d));
    GridDensity g;
    for (std::uint32_t k = 0; k < d; ++k) g.extents.push_back(static_cast<std::size_t>(get<std::uint64_t>(in)));
    for (std::uint32_t k = 0; k < d; ++k) g.origin.push_back(get<double>(in));
    for (std::uint32_t k = 0; k < d; ++k) g.spacing.push_back(get<double>(in));
    g.masses.resize(g.cell_count());
    in.read(reinterpret_cast<char*>(g.masses.data()), static_cast<std::streamsize>(g.masses.size() * sizeof(double)));
    if (!in) throw Error("grid dump: truncated mass table");
    return g;
}

void save_grid_binary(const std::string& path, const GridDensity& grid) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(fmt::format("cannot open '{}' for writing", path));
    write_grid_binary(out, grid);
}

GridDensity load_grid_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(fmt::format("cannot open '{}'", path));
    return read_grid_binary(in);
}

}  // namespace flowlab
