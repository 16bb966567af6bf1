#include <assert.h>
#include <math.h>
#include <stdio.h>
#include "groupsense.h"

int main(void) {
    GsNode *node = gs_node_new(0, 3, 3, 2, NULL);
    assert(node != NULL);

    /* strong neighbor 1: twelve samples then a refresh */
    uint8_t empty[3] = {0, 0, 0};
    for (int i = 0; i < 12; i++) {
        GsStatus st = gs_node_receive_data(node, 1, 0, 20, i * 80, empty, 3);
        assert(st == GS_OK);
    }
    assert(gs_node_refresh(node, 1000) == GS_OK);
    assert(gs_node_proxim(node, 1) == 3);

    uint8_t payload[3] = {0, 3, 3};
    assert(gs_node_receive_data(node, 1, 0, 20, 1100, payload, 3) == GS_OK);

    uint8_t vec[3];
    assert(gs_node_vector(node, vec, 3) == 3);
    assert(vec[0] == 3 && vec[1] == 3 && vec[2] == 3);

    uint32_t mates[3];
    assert(gs_node_mates(node, mates, 3) == 3);

    assert(gs_node_receive_beacon(node, 7) == GS_OK);
    assert(gs_node_epoch(node) == 7);
    assert(gs_node_vector(node, vec, 3) == 3);
    assert(vec[1] == 0 && vec[2] == 0);

    assert(fabs(gs_bound_expected_tau(10, 1) - 33.0259) < 1e-3);
    assert(isnan(gs_bound_tau_with_confidence(10, 1, 2.0)));

    printf("c-abi smoke: ok (version %s)\n", gs_version());
    gs_node_free(node);
    return 0;
}
