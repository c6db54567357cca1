/* Loads a scenario, runs it and prints the settling time.
 *
 *   cargo build --release -p fts-teleop-ffi
 *   cc crates/ffi/examples/smoke.c -Icrates/ffi/include \
 *      target/release/libfts_teleop_ffi.a -lm -lpthread -ldl -o smoke
 *   ./smoke crates/core/scenarios/c1_sim.cfg
 */
#include <stdio.h>

#include "fts_teleop.h"

static int report(FtsStatus status, const char *what) {
    const char *msg = fts_last_error_message();
    fprintf(stderr, "%s failed (%d): %s\n", what, (int)status, msg ? msg : "?");
    return 1;
}

int main(int argc, char **argv) {
    if (argc != 2) {
        fprintf(stderr, "usage: %s SCENARIO\n", argv[0]);
        return 2;
    }
    FtsScenario *scenario = NULL;
    FtsStatus st = fts_scenario_load(argv[1], &scenario);
    if (st != FTS_STATUS_OK) return report(st, "load");

    FtsTrace *trace = NULL;
    st = fts_scenario_simulate(scenario, &trace);
    if (st != FTS_STATUS_OK) {
        fts_scenario_free(scenario);
        return report(st, "simulate");
    }
    double tol = 0.0, t = 0.0;
    size_t len = 0;
    fts_scenario_tolerance(scenario, &tol);
    fts_trace_len(trace, &len);
    st = fts_trace_convergence_time(trace, tol, &t);
    if (st == FTS_STATUS_OK)
        printf("fts-teleop %s: %zu samples, t* = %.3f s\n", fts_version(), len, t);
    else
        printf("fts-teleop %s: %zu samples, not settled\n", fts_version(), len);
    fts_trace_free(trace);
    fts_scenario_free(scenario);
    return 0;
}
