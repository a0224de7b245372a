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
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "sumgp/error.hpp"

namespace sumgp {

using Vector = Eigen::VectorXd;

enum class MaterialClass { Rigid, Deformable };

/// How a dimension is mapped to the unit interval. Log10 dimensions
/// (Young's modulus) are normalized on a log scale so that one decade
/// of stiffness spans the cube evenly.
enum class DimScale { Linear, Log10 };

struct DimSpec {
    std::string name;
    double lower = 0.0;
    double upper = 0.0;
    DimScale scale = DimScale::Linear;
};

/// One object in the scene roster. Rigid objects expose a single mass
/// dimension; deformable objects expose Young's modulus and Poisson's
/// ratio.
struct ObjectSpec {
    int id = -1;
    std::string name;
    MaterialClass material_class = MaterialClass::Rigid;
    std::vector<DimSpec> dims;

    static ObjectSpec rigid(int id, std::string name,
                            double mass_lo = 0.01, double mass_hi = 2.0);
    static ObjectSpec deformable(int id, std::string name,
                                 double e_lo = 1000.0, double e_hi = 10000.0,
                                 double nu_lo = -0.5, double nu_hi = 0.5);
};

/// Ordered list of object ids present in one scene. Subspace vectors
/// follow this ordering, not the global object order.
struct SubsetIndex {
    std::vector<int> object_ids;
};

/// The flat parameter vector layout over a fixed object roster.
class ParameterSpace {
public:
    explicit ParameterSpace(std::vector<ObjectSpec> objects);

    int total_dims() const { return total_dims_; }
    const std::vector<ObjectSpec>& objects() const { return objects_; }
    std::size_t num_objects() const { return objects_.size(); }

    bool has_object(int id) const { return index_by_id_.count(id) > 0; }
    const ObjectSpec& object(int id) const;
    /// Starting index of the object's block in the flat vector.
    int offset_of(int id) const;
    /// Flattened per-dimension specs, in global order.
    const std::vector<DimSpec>& flat_dims() const { return flat_dims_; }

    /// Flat indices covered by a subset, in the subset's order.
    std::vector<int> subset_flat_indices(const SubsetIndex& k) const;
    int subset_dims(const SubsetIndex& k) const;

    static ParameterSpace from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

private:
    std::vector<ObjectSpec> objects_;
    std::vector<int> offsets_;
    std::vector<DimSpec> flat_dims_;
    std::unordered_map<int, std::size_t> index_by_id_;
    int total_dims_ = 0;
};

/// Throws if theta is the wrong length or any entry is outside its bounds.
void validate(const ParameterSpace& space, const Vector& theta);

/// Concatenated dimension blocks of exactly the objects in k, in k's order.
Vector slice_params(const ParameterSpace& space, const Vector& theta,
                    const SubsetIndex& k);

/// base with the blocks for objects in k overwritten by sub.
Vector scatter_params(const ParameterSpace& space, const Vector& sub,
                      const SubsetIndex& k, const Vector& base);

/// Affine map to the unit cube (log10 first for Log10 dimensions).
Vector normalize(const ParameterSpace& space, const Vector& theta);
Vector denormalize(const ParameterSpace& space, const Vector& u);

/// Normalize/denormalize a single dimension given its spec.
double normalize_dim(const DimSpec& d, double v);
double denormalize_dim(const DimSpec& d, double u);

/// n i.i.d. vectors uniform (in physical units) within bounds.
std::vector<Vector> sample_uniform(const ParameterSpace& space,
                                   std::uint64_t seed, int n);

} // namespace sumgp
