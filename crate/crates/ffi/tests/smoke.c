#include <math.h>
#include <stdio.h>
#include "crpsmix.h"

#define D 32

int main(void) {
    double experts[2 * D], learner[D], params[3] = {0.0, 0.5, 1.0}, loss, w[2];
    double conf[2] = {1.0, 0.5};
    CrpsmixAggregator *h = NULL;

    if (crpsmix_discretize("triangular", params, 3, 0.0, 1.0, D, experts) != CRPSMIX_STATUS_OK) return 1;
    if (crpsmix_discretize("uniform", params, 2, 0.0, 1.0, D, experts + D) != CRPSMIX_STATUS_OK) return 2;
    if (crpsmix_aggregator_new(CRPSMIX_RULE_AA, 0.0, 1.0, D, 2, 0.001, true, &h) != CRPSMIX_STATUS_OK) return 3;
    for (int t = 0; t < 20; t++) {
        if (crpsmix_aggregator_predict(h, experts, conf, learner) != CRPSMIX_STATUS_OK) return 4;
        if (learner[D - 1] != 1.0) return 5;
        if (crpsmix_aggregator_observe(h, 0.5, &loss) != CRPSMIX_STATUS_OK) return 6;
    }
    if (crpsmix_aggregator_rounds(h) != 20) return 7;
    if (crpsmix_aggregator_weights(h, w, 2) != CRPSMIX_STATUS_OK || fabs(w[0] + w[1] - 1.0) > 1e-12) return 8;
    if (crpsmix_aggregator_observe(h, 0.5, &loss) != CRPSMIX_STATUS_OUT_OF_ORDER) return 9;
    if (crpsmix_last_error()[0] == '\0') return 10;
    crpsmix_aggregator_free(h);
    printf("ok\n");
    return 0;
}
