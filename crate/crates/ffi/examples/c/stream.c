/* Feed a noiseless linear stream into an ARU state and print the recovered
 * coefficients. Build against include/aru.h and libaru_ffi. */
#include <math.h>
#include <stdio.h>
#include <stdlib.h>

#include "aru.h"

static int check(AruStatus st, const char *what) {
    if (st != ARU_STATUS_OK) {
        const char *msg = aru_last_error();
        fprintf(stderr, "%s failed: %s (%s)\n", what, aru_status_name((int32_t)st), msg ? msg : "");
        return 1;
    }
    return 0;
}

int main(void) {
    const double aging[1] = {1.0};
    const double w[2] = {2.0, -1.0};
    const double bias = 0.5;
    AruState *state = NULL;
    if (check(aru_state_new(2, aging, 1, 1e-6, &state), "aru_state_new")) return 1;

    for (int t = 0; t < 200; t++) {
        double h[2] = {sin(0.1 * t), cos(0.37 * t)};
        double y = w[0] * h[0] + w[1] * h[1] + bias;
        if (check(aru_state_update(state, h, 2, y), "aru_state_update")) return 1;
    }

    double theta[3];
    double sigma = -1.0;
    if (check(aru_state_local_params(state, 0, theta, 3, &sigma), "aru_state_local_params")) return 1;
    printf("theta %.6f %.6f %.6f sigma %.3e steps %llu\n", theta[0], theta[1], theta[2], sigma,
           (unsigned long long)aru_state_steps(state));

    double bad[3] = {0.0, 0.0, 0.0};
    AruStatus st = aru_state_update(state, bad, 3, 0.0);
    printf("shape error -> %s\n", aru_status_name((int32_t)st));

    size_t size = 0;
    if (check(aru_state_to_bytes(state, NULL, 0, &size), "aru_state_to_bytes")) return 1;
    unsigned char *buf = malloc(size);
    size_t written = 0;
    if (check(aru_state_to_bytes(state, buf, size, &written), "aru_state_to_bytes")) return 1;
    AruState *copy = NULL;
    if (check(aru_state_from_bytes(buf, written, &copy), "aru_state_from_bytes")) return 1;
    printf("restored steps %llu\n", (unsigned long long)aru_state_steps(copy));

    free(buf);
    aru_state_free(copy);
    aru_state_free(state);
    int ok = fabs(theta[0] - w[0]) < 1e-4 && fabs(theta[1] - w[1]) < 1e-4 && fabs(theta[2] - bias) < 1e-4;
    return ok ? 0 : 2;
}
