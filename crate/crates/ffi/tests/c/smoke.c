#include <stdio.h>
#include <string.h>
#include "thrifty.h"

int main(void) {
    double out = 0.0;
    if (thrifty_burden(2.0, 4.0, 1.0, &out) != THRIFTY_STATUS_OK || out != 10.0) return 1;

    double v[] = {5.0, 1.0, 4.0, 2.0, 3.0};
    if (thrifty_nearest_rank_quantile(v, 5, 0.6, &out) != THRIFTY_STATUS_OK || out != 3.0) return 2;

    ThriftyEnv *env = NULL;
    if (thrifty_env_new(NULL, 7, &env) != THRIFTY_STATUS_OK) return 3;
    double s[2], next[2], a[2] = {0.05, 0.0};
    bool goal = false;
    if (thrifty_env_reset(env, s) != THRIFTY_STATUS_OK) return 4;
    if (thrifty_env_step(env, s, a, next, &goal) != THRIFTY_STATUS_OK) return 5;
    thrifty_env_free(env);

    ThriftyPolicy *policy = NULL;
    if (thrifty_policy_load("/nonexistent/policy.json", &policy) != THRIFTY_STATUS_IO) return 6;
    char msg[256];
    if (thrifty_last_error(msg, sizeof msg) == 0 || policy != NULL) return 7;

    printf("ok %s\n", thrifty_version());
    return 0;
}
