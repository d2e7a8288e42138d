#pragma once
// Spectrum CSV exchange format: header "frequency_GHz,s11_mag,s21_mag", one
// row per grid point. Readers check the frequency column against the
// expected grid; resampling is out of scope.

#include "siwinv/wave.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace siwinv {

inline void write_spectrum_csv(const Spectrum& s, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "frequency_GHz,s11_mag,s21_mag\n";
    out.precision(12);
    for (int i = 0; i < s.grid.n_points; ++i)
        out << s.grid.at(i) << "," << s.s11_mag[i] << "," << s.s21_mag[i] << "\n";
}

inline Spectrum read_spectrum_csv(const std::filesystem::path& path, const FrequencyGrid& expect) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "frequency_GHz,s11_mag,s21_mag")
        throw std::runtime_error("grid mismatch: " + path.string() +
                                 " lacks the expected spectrum header");
    Spectrum s;
    s.grid = expect;
    int row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        double v[3];
        for (int k = 0; k < 3; ++k) {
            if (!std::getline(ss, cell, ','))
                throw std::runtime_error("grid mismatch: short row in " + path.string());
            v[k] = std::stod(cell);
        }
        if (row >= expect.n_points)
            throw std::runtime_error("grid mismatch: " + path.string() + " has extra rows");
        if (std::abs(v[0] - expect.at(row)) > 1e-9)
            throw std::runtime_error("grid mismatch: " + path.string() + " row " +
                                     std::to_string(row) + " frequency " + std::to_string(v[0]));
        s.s11_mag.push_back(v[1]);
        s.s21_mag.push_back(v[2]);
        ++row;
    }
    if (row != expect.n_points)
        throw std::runtime_error("grid mismatch: " + path.string() + " has " +
                                 std::to_string(row) + " rows, expected " +
                                 std::to_string(expect.n_points));
    return s;
}

} // namespace siwinv
