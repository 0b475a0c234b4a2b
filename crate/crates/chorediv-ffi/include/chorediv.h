#ifndef CHOREDIV_H
#define CHOREDIV_H

#pragma once

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes. `CD_STATUS_FAILED` means the call ran and its check came out
 negative (conditions fail, candidate rejected, no equilibrium found); the
 output report is still written.
 */
typedef enum CdStatus {
  CD_STATUS_OK = 0,
  CD_STATUS_FAILED = 1,
  CD_STATUS_NULL_POINTER = 2,
  CD_STATUS_INVALID_UTF8 = 3,
  CD_STATUS_INVALID_INPUT = 4,
  CD_STATUS_PANIC = 5,
} CdStatus;

/*
 Opaque instance handle.
 */
typedef struct CdInstance CdInstance;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Parses an instance from JSON. On success `*out` receives a handle to be
 released with `cd_instance_free`.

 # Safety
 `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CdStatus cd_instance_from_json(const char *json, struct CdInstance **out);

/*
 Serializes an instance back to JSON.

 # Safety
 `inst` must come from this library; `out` must be a valid pointer.
 */
enum CdStatus cd_instance_to_json(const struct CdInstance *inst, char **out);

/*
 # Safety
 `inst` must be null or a handle from this library not yet freed.
 */
void cd_instance_free(struct CdInstance *inst);

/*
 Number of agents, or 0 for a null handle.

 # Safety
 `inst` must be null or a live handle.
 */
uintptr_t cd_instance_agents(const struct CdInstance *inst);

/*
 Number of chores, or 0 for a null handle.

 # Safety
 `inst` must be null or a live handle.
 */
uintptr_t cd_instance_chores(const struct CdInstance *inst);

/*
 Writes the conditions report as JSON. Returns `CD_STATUS_FAILED` when a
 condition fails.

 # Safety
 Pointers must be valid as documented at the top of the header.
 */
enum CdStatus cd_check_conditions(const struct CdInstance *inst, char **out_json);

/*
 Verifies a candidate (exact or float JSON). `epsilon` may be null for 0.

 # Safety
 Pointers must be valid; `epsilon` may be null.
 */
enum CdStatus cd_verify(const struct CdInstance *inst,
                        const char *candidate_json,
                        const char *epsilon,
                        char **out_json);

/*
 Lists all equilibria exactly. `cap` bounds the number of patterns tried
 (0 means the default). Returns `CD_STATUS_FAILED` when none exist.

 # Safety
 Pointers must be valid; `epsilon` may be null.
 */
enum CdStatus cd_enumerate(const struct CdInstance *inst,
                           const char *epsilon,
                           uint64_t cap,
                           char **out_json);

/*
 Runs the fixed-point iteration. Returns `CD_STATUS_FAILED` if it stalls.
 Non-positive `max_iters`, `tol` or `damping` select the defaults.

 # Safety
 Pointers must be valid.
 */
enum CdStatus cd_solve_fixedpoint(const struct CdInstance *inst,
                                  uint64_t max_iters,
                                  double tol,
                                  double damping,
                                  char **out_json);

/*
 Builds the fixed-earnings market of a DIMACS CNF formula with the default
 gadget constants.

 # Safety
 `dimacs` must be NUL-terminated; `out` must be valid.
 */
enum CdStatus cd_gen_sat(const char *dimacs, struct CdInstance **out);

/*
 Builds the layered exchange market of a polymatrix game given as
 `{"payoff": [[...]]}`.

 # Safety
 `game_json` must be NUL-terminated; `out` must be valid.
 */
enum CdStatus cd_gen_polymatrix(const char *game_json, struct CdInstance **out);

/*
 Releases a string returned by this library. Null is ignored.

 # Safety
 `s` must be null or a string from this library not yet freed.
 */
void cd_string_free(char *s);

/*
 Message of the last failed call on this thread, or null. The pointer
 stays valid until the next library call on the same thread.
 */
const char *cd_last_error_message(void);

/*
 Library version as a static string.
 */
const char *cd_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHOREDIV_H */
