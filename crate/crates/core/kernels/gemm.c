/* C = alpha*A*B + beta*C in i-k-j order, so the innermost loop has no
 * floating-point reduction. */
#include <stdio.h>
#include <stdlib.h>

#ifndef N
#define N 384
#endif
#define PAD 128

int main(void)
{
    double alpha = 1.5, beta = 1.2;
    double *A = malloc(sizeof(double) * (N * N + PAD));
    double *B = malloc(sizeof(double) * (N * N + PAD));
    double *C = malloc(sizeof(double) * (N * N + PAD));
    if (!A || !B || !C)
        return 1;

    for (int i = 0; i < N; i++)
        for (int j = 0; j < N; j++) {
            A[i * N + j] = (double)((i * j + 1) % N) / N;
            B[i * N + j] = (double)((i * (j + 1) + 2) % N) / N;
            C[i * N + j] = (double)((i * (j + 2) + 3) % N) / N;
        }

    /* mrl:loop L0 */
    for (int i = 0; i < N; i++) {
        for (int j = 0; j < N; j++)
            C[i * N + j] *= beta;
        for (int k = 0; k < N; k++) {
            double a = alpha * A[i * N + k];
            /* mrl:loop L1 */
            for (int j = 0; j < N; j++) {
                /* mrl:load &B[k * N + j + PF_DIST] */
                C[i * N + j] += a * B[k * N + j];
            }
        }
    }

    double sum = 0.0;
    for (int i = 0; i < N * N; i++)
        sum += C[i] * (double)(i % 5 + 1);
    printf("checksum=%.17g\n", sum);
    free(A);
    free(B);
    free(C);
    return 0;
}
