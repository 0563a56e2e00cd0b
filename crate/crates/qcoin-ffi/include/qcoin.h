/* C interface to the qcoin verification scheme. */

#pragma once

/* Generated with cbindgen:0.27.0 */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status of one call. Anything but `Ok` leaves a message for
// [`qcoin_last_error`].
typedef enum QcoinStatus {
  QcoinStatus_Ok = 0,
  QcoinStatus_NullPointer = 1,
  QcoinStatus_InvalidArgument = 2,
  QcoinStatus_IoError = 3,
  QcoinStatus_FormatError = 4,
  QcoinStatus_Internal = 5,
} QcoinStatus;

// Outcome of one verification, mirroring the CLI exit codes.
typedef enum QcoinVerdict {
  QcoinVerdict_Valid = 0,
  QcoinVerdict_Invalid = 1,
  QcoinVerdict_ExhaustedOrAborted = 2,
} QcoinVerdict;

// Opaque coin handle.
typedef struct QcoinCoin QcoinCoin;

// Opaque bank ledger handle.
typedef struct QcoinLedger QcoinLedger;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// The message of the most recent failure on this thread, or NULL. The
// pointer stays valid until the next failing call on the same thread.
const char *qcoin_last_error(void);

// Creates an empty ledger.
struct QcoinLedger *qcoin_ledger_new(void);

// Loads a ledger file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum QcoinStatus qcoin_ledger_load(const char *path, struct QcoinLedger **out);

// Writes a ledger file.
//
// # Safety
// `ledger` must be a live handle and `path` a NUL-terminated string.
enum QcoinStatus qcoin_ledger_save(const struct QcoinLedger *ledger, const char *path);

// Number of coins the ledger backs.
//
// # Safety
// `ledger` must be a live handle or NULL.
uint64_t qcoin_ledger_len(const struct QcoinLedger *ledger);

// Releases a ledger handle.
//
// # Safety
// `ledger` must come from this library and not be freed twice.
void qcoin_ledger_free(struct QcoinLedger *ledger);

// Mints one coin of `k` registers: the secret record is appended to the
// ledger and the coin handle is returned through `out`.
//
// # Safety
// `ledger` must be a live handle and `out` a valid pointer.
enum QcoinStatus qcoin_mint(struct QcoinLedger *ledger,
                            uint64_t k,
                            uint64_t epoch,
                            uint64_t seed,
                            struct QcoinCoin **out);

// Loads a coin file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum QcoinStatus qcoin_coin_load(const char *path, struct QcoinCoin **out);

// Writes a coin file, simulated amplitudes included.
//
// # Safety
// `coin` must be a live handle and `path` a NUL-terminated string.
enum QcoinStatus qcoin_coin_save(const struct QcoinCoin *coin, const char *path);

// Copies the coin id into `buf`, NUL-terminated. Returns the id length in
// bytes, excluding the terminator; nothing is written when `buf_len` is too
// small.
//
// # Safety
// `coin` must be a live handle; `buf` must point to `buf_len` writable bytes.
uint64_t qcoin_coin_id(const struct QcoinCoin *coin, char *buf, uint64_t buf_len);

// Number of registers on the coin.
//
// # Safety
// `coin` must be a live handle or NULL.
uint64_t qcoin_coin_registers(const struct QcoinCoin *coin);

// Number of registers already burned.
//
// # Safety
// `coin` must be a live handle or NULL.
uint64_t qcoin_coin_used(const struct QcoinCoin *coin);

// Releases a coin handle.
//
// # Safety
// `coin` must come from this library and not be freed twice.
void qcoin_coin_free(struct QcoinCoin *coin);

// Runs one in-memory verification of `coin` against `ledger` with challenge
// size `t`. Burned registers stay burned whatever the verdict.
//
// # Safety
// `ledger` and `coin` must be live handles and `out` a valid pointer.
enum QcoinStatus qcoin_verify(const struct QcoinLedger *ledger,
                              struct QcoinCoin *coin,
                              uint32_t t,
                              uint64_t bank_seed,
                              uint64_t holder_seed,
                              enum QcoinVerdict *out);

// Estimates the acceptance probability of an attack strategy over `trials`
// seeded protocol sessions. `strategy` is one of "honest", "blind",
// "wrong-basis", "replay".
//
// # Safety
// `strategy` must be a NUL-terminated string and `out` a valid pointer.
enum QcoinStatus qcoin_attack_estimate(const char *strategy,
                                       uint32_t t,
                                       uint64_t trials,
                                       uint64_t seed,
                                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus
