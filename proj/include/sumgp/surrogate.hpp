/*
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "sumgp/param_space.hpp"

namespace sumgp {

struct GridConfig {
    int width = 64;
    int height = 48;
    double cell_size = 0.005; // meters per cell

    nlohmann::json to_json() const;
    static GridConfig from_json(const nlohmann::json& j);
};

/// Top-down grid of surface heights in meters, row-major.
struct Heightmap {
    int width = 0;
    int height = 0;
    double cell_size = 0.0;
    std::vector<double> values;

    static Heightmap zeros(const GridConfig& grid);

    double& at(int row, int col) { return values[row * width + col]; }
    double at(int row, int col) const { return values[row * width + col]; }

    /// World coordinates of a cell center (origin at the grid corner).
    double cell_x(int col) const { return (col + 0.5) * cell_size; }
    double cell_y(int row) const { return (row + 0.5) * cell_size; }

    /// Text format: "HMAP <width> <height> <cell_size>" then one row of
    /// space-separated heights per line, 9 significant digits.
    std::string to_text() const;
    static Heightmap from_text(std::istream& in);
    void save(const std::string& path) const;
    static Heightmap load(const std::string& path);
};

/// Known, fixed geometry of an object's footprint on the table.
struct Footprint {
    double cx = 0.0;
    double cy = 0.0;
    double radius = 0.0; // meters
    double height = 0.0; // nominal peak height, meters
};

/// One object placed on top of another, with a placement offset of the
/// top object's centroid relative to the bottom object's.
struct SceneSpec {
    std::string name;
    int bottom_id = -1;
    int top_id = -1;
    Footprint bottom;
    Footprint top;
    double dx = 0.0;
    double dy = 0.0;

    nlohmann::json to_json() const;
    static SceneSpec from_json(const nlohmann::json& j);
};

struct Observation {
    SceneSpec scene;
    SubsetIndex k; // exactly {bottom_id, top_id}
    Heightmap observed;
};

/// Adds a smooth radial bump amplitude*exp(-||p-c||^2/(2 r^2)) to the grid.
void render_footprint(Heightmap& hm, double cx, double cy, double radius,
                      double amplitude);

/// Indentation depth of the bottom surface under the top object's load.
/// Zero for rigid bottoms; clamped to 0.8 of the bottom amplitude.
double load_depth(const ParameterSpace& space, const SceneSpec& scene,
                  const Vector& theta_k);

/// Deterministic closed-form contact model; theta_k is the (bottom
/// block, top block) subspace vector.
Heightmap surrogate_simulate(const ParameterSpace& space, const SceneSpec& scene,
                             const Vector& theta_k, const GridConfig& grid);

/// Negative area-weighted L1 distance between two heightmaps; always <= 0.
double reward(const Heightmap& observed, const Heightmap& predicted);

struct NoiseConfig {
    double amplitude = 0.0; // uniform +-amplitude per cell, meters
    std::uint64_t seed = 0;
};

/// Ground-truth observations for a scene list at the true parameters.
std::vector<Observation> make_dataset(const std::vector<SceneSpec>& scenes,
                                      const ParameterSpace& space,
                                      const Vector& theta_star,
                                      const GridConfig& grid,
                                      const NoiseConfig& noise = {});

} // namespace sumgp
