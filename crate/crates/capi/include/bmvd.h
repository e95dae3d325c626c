#ifndef BMVD_H
#define BMVD_H

/* Generated by cbindgen from the bmvd-capi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Outcome of a C-ABI call.
typedef enum {
  BMVD_STATUS_OK = 0,
  BMVD_STATUS_NULL_POINTER = 1,
  BMVD_STATUS_INVALID_ARGUMENT = 2,
  BMVD_STATUS_DOMAIN_ERROR = 3,
  BMVD_STATUS_SOLVER_ERROR = 4,
  BMVD_STATUS_SIMULATION_ERROR = 5,
} BmvdStatus;

// Variant tag of a boundary-crossing point.
typedef enum {
  // Half-line point: `a` is the distance from the darning point.
  BMVD_POINT_TAG_LEG = 0,
  // The darning point itself; coordinates ignored.
  BMVD_POINT_TAG_STAR = 1,
  // Plane point with coordinates `(a, b)`.
  BMVD_POINT_TAG_PLANE = 2,
} BmvdPointTag;

// Opaque kernel-table handle from a deterministic solve.
typedef struct BmvdKernelTable BmvdKernelTable;

// Opaque model-parameter handle.
typedef struct BmvdParams BmvdParams;

// A point of the glued space.
typedef struct {
  BmvdPointTag tag;
  double a;
  double b;
} BmvdPoint;

// Last error message of the current thread, or null. The pointer stays
// valid until the next failing call on this thread.
const char *bmvd_last_error_message(void);

// Creates a model-parameter handle for `(eps, p)`.
BmvdStatus bmvd_params_new(double eps, double p, BmvdParams **out);

// Frees a parameter handle; null is allowed.
void bmvd_params_free(BmvdParams *params);

// Interface skewness `(2 pi eps - p) / (2 pi eps + p)`.
double bmvd_params_eta(const BmvdParams *params);

// Geodesic distance between two points.
BmvdStatus bmvd_rho(const BmvdParams *params, BmvdPoint x, BmvdPoint y, double *out);

// Canonical envelope `p0_{variant, alpha}` with threshold `m`.
BmvdStatus bmvd_envelope(const BmvdParams *params,
                         uint8_t variant,
                         double alpha,
                         double m,
                         double t,
                         BmvdPoint x,
                         BmvdPoint y,
                         double *out);

// Solves the driftless kernel from the signed radial coordinate `x0` on a
// free-space grid and returns a table handle.
BmvdStatus bmvd_pde_solve(const BmvdParams *params,
                          double l_leg,
                          double l_plane,
                          double h,
                          double x0,
                          const double *times,
                          uintptr_t n_times,
                          BmvdKernelTable **out);

// Density with respect to the reference measure at a point, at one of the
// table's output times.
BmvdStatus bmvd_table_value(const BmvdKernelTable *table, double t, BmvdPoint y, double *out);

// Total mass at one of the table's output times.
BmvdStatus bmvd_table_mass(const BmvdKernelTable *table, double t, double *out);

// Weighted one-sided derivative mismatch at the darning point.
BmvdStatus bmvd_table_flux_at_star(const BmvdKernelTable *table, double t, double *out);

// Frees a kernel-table handle; null is allowed.
void bmvd_table_free(BmvdKernelTable *table);

// Simulates the driftless signed radial process from `x0` and writes the
// empirical density (with respect to the reference measure) and its
// standard errors over the `n_edges - 1` bins given by `edges`.
BmvdStatus bmvd_simulate_radial_density(const BmvdParams *params,
                                        double x0,
                                        double dt,
                                        double horizon,
                                        uintptr_t n_paths,
                                        uint64_t seed,
                                        const double *edges,
                                        uintptr_t n_edges,
                                        double *out_density,
                                        double *out_se);

// Green column of the killed driftless process on the symmetric domain
// `(0, leg_len) + annulus(eps, plane_radius)`, evaluated at the signed
// coordinates `ys`.
BmvdStatus bmvd_green_column(const BmvdParams *params,
                             double leg_len,
                             double plane_radius,
                             double h,
                             double t_max,
                             BmvdPoint x0,
                             const double *ys,
                             uintptr_t n,
                             double *out);

#endif  /* BMVD_H */
