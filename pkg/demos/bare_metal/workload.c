/*
 * A small CoreMark-style workload: linked-list reversal and search, integer
 * matrix multiply, a byte-stream state machine and CRC-16, repeated ITERATIONS
 * times.  Builds for the host too (-DHOST) so results can be cross-checked.
 */
#include <stdint.h>

#ifndef ITERATIONS
#define ITERATIONS 10
#endif

#ifdef HOST
#include <stdio.h>
static void put_str(const char *s) { fputs(s, stdout); }
static void report_iterations(uint32_t n) { (void)n; }
#else
#define CONSOLE (*(volatile uint8_t *)0x10000000)
#define ITERS_PORT (*(volatile uint32_t *)0x10000008)
static void put_str(const char *s) { while (*s) CONSOLE = (uint8_t)*s++; }
static void report_iterations(uint32_t n) { ITERS_PORT = n; }

/* rv32i has no multiply; the compiler calls these */
uint32_t __mulsi3(uint32_t a, uint32_t b) {
    uint32_t r = 0;
    while (b) {
        if (b & 1) r += a;
        a <<= 1;
        b >>= 1;
    }
    return r;
}

void *memset(void *d, int c, unsigned n) {
    uint8_t *p = d;
    while (n--) *p++ = (uint8_t)c;
    return d;
}

void *memcpy(void *d, const void *s, unsigned n) {
    uint8_t *p = d;
    const uint8_t *q = s;
    while (n--) *p++ = *q++;
    return d;
}
#endif

static uint16_t crc16(uint16_t crc, uint8_t byte) {
    crc ^= byte;
    for (int i = 0; i < 8; i++)
        crc = (crc & 1) ? (uint16_t)((crc >> 1) ^ 0xA001) : (uint16_t)(crc >> 1);
    return crc;
}

struct node { struct node *next; int32_t value; };
#define NODES 32
static struct node pool[NODES];

static uint16_t list_kernel(uint16_t crc, int32_t seed) {
    struct node *head = 0;
    for (int i = 0; i < NODES; i++) {
        pool[i].value = (seed ^ (i * 7919)) & 0xFFFF;
        pool[i].next = head;
        head = &pool[i];
    }
    struct node *prev = 0;
    while (head) {
        struct node *n = head->next;
        head->next = prev;
        prev = head;
        head = n;
    }
    int32_t found = 0;
    for (struct node *p = prev; p; p = p->next)
        if ((p->value & 15) == 3) found += p->value;
    crc = crc16(crc, (uint8_t)found);
    return crc16(crc, (uint8_t)(found >> 8));
}

#define DIM 6
static int32_t ma[DIM][DIM], mb[DIM][DIM], mc[DIM][DIM];

static uint16_t matrix_kernel(uint16_t crc, int32_t seed) {
    for (int i = 0; i < DIM; i++)
        for (int j = 0; j < DIM; j++) {
            ma[i][j] = (seed + i - j) & 0xFF;
            mb[i][j] = (seed ^ (i + 3 * j)) & 0x7F;
        }
    for (int i = 0; i < DIM; i++)
        for (int j = 0; j < DIM; j++) {
            int32_t acc = 0;
            for (int k = 0; k < DIM; k++) acc += ma[i][k] * mb[k][j];
            mc[i][j] = acc;
        }
    for (int i = 0; i < DIM; i++) crc = crc16(crc, (uint8_t)mc[i][DIM - 1 - i]);
    return crc;
}

static const char stream[] = "12,-7,+3.5e2,0x1f,abc,,42.0,-.5,7e,";

static uint16_t state_kernel(uint16_t crc) {
    enum { START, INT, FRAC, EXP, BAD } st = START;
    uint32_t counts[5] = {0};
    for (const char *p = stream; *p; p++) {
        char c = *p;
        if (c == ',') { counts[st]++; st = START; continue; }
        switch (st) {
        case START: st = (c >= '0' && c <= '9') || c == '-' || c == '+' ? INT : c == '.' ? FRAC : BAD; break;
        case INT:   st = (c >= '0' && c <= '9') ? INT : c == '.' ? FRAC : (c == 'e' ? EXP : BAD); break;
        case FRAC:  st = (c >= '0' && c <= '9') ? FRAC : (c == 'e' ? EXP : BAD); break;
        case EXP:   st = (c >= '0' && c <= '9') ? EXP : BAD; break;
        default:    break;
        }
    }
    for (int i = 0; i < 5; i++) crc = crc16(crc, (uint8_t)counts[i]);
    return crc;
}

static void put_hex(uint32_t v) {
    char buf[9];
    for (int i = 7; i >= 0; i--) {
        buf[i] = "0123456789abcdef"[v & 15];
        v >>= 4;
    }
    buf[8] = 0;
    put_str(buf);
}

int main(void) {
    uint16_t crc = 0xFFFF;
    for (int32_t it = 0; it < ITERATIONS; it++) {
        crc = list_kernel(crc, it);
        crc = matrix_kernel(crc, it);
        crc = state_kernel(crc);
    }
    report_iterations(ITERATIONS);
    put_str("crc ");
    put_hex(crc);
    put_str("\n");
    return 0;
}
