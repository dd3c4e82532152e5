"""Generated by scripts/gen_poly_table.py -- do not edit by hand.

PENTANOMIALS[n] = (a, b, c) for the modulus x^n + x^a + x^b + x^c + 1.
VERIFIED[n] is 'primitive' when the order of x was checked against the
full factorisation of 2^n - 1, otherwise 'irreducible' (Rabin test).
"""

PENTANOMIALS = {
    32: (7, 6, 2),
    64: (4, 3, 1),
    96: (10, 9, 6),
    128: (7, 2, 1),
    160: (5, 3, 2),
    192: (15, 11, 5),
    224: (12, 7, 2),
    256: (10, 5, 2),
    288: (11, 10, 1),
    320: (4, 3, 1),
    352: (13, 11, 6),
    384: (16, 15, 6),
    416: (9, 5, 2),
    448: (11, 6, 4),
    480: (16, 13, 7),
    512: (8, 5, 2),
    544: (8, 3, 1),
    576: (13, 4, 3),
    608: (19, 13, 6),
    640: (14, 3, 2),
    672: (11, 6, 5),
    704: (12, 5, 3),
    736: (13, 8, 6),
    768: (19, 17, 4),
    800: (9, 7, 1),
    832: (13, 5, 2),
    864: (21, 10, 6),
    896: (7, 5, 3),
    928: (10, 3, 2),
    960: (13, 9, 6),
    992: (17, 15, 13),
    1024: (19, 6, 1),
    1056: (11, 2, 1),
    1088: (22, 21, 10),
    1120: (13, 9, 6),
    1152: (15, 3, 2),
    1184: (5, 3, 2),
    1216: (27, 25, 9),
    1248: (15, 5, 3),
    1280: (12, 7, 5),
    1312: (15, 14, 2),
    1344: (15, 6, 1),
    1376: (19, 18, 10),
    1408: (14, 13, 6),
    1440: (14, 13, 7),
    1472: (11, 4, 1),
    1504: (8, 3, 2),
    1536: (21, 6, 2),
    1568: (21, 10, 7),
    1600: (14, 11, 1),
    1632: (17, 15, 3),
    1664: (17, 9, 6),
    1696: (15, 6, 3),
    1728: (11, 10, 5),
    1760: (8, 3, 2),
    1792: (17, 14, 3),
    1824: (7, 5, 1),
    1856: (11, 9, 4),
    1888: (17, 13, 2),
    1920: (23, 20, 1),
    1952: (15, 14, 6),
    1984: (13, 11, 5),
    2016: (21, 15, 7),
    2048: (19, 14, 13),
    2080: (4, 3, 1),
    2112: (16, 13, 7),
    2144: (13, 7, 3),
    2176: (15, 8, 1),
    2208: (21, 16, 6),
    2240: (23, 7, 1),
    2272: (21, 10, 9),
    2304: (8, 7, 5),
    2336: (15, 10, 8),
    2368: (13, 11, 8),
    2400: (20, 19, 17),
    2432: (29, 22, 19),
    2464: (5, 4, 3),
    2496: (12, 3, 1),
    2528: (19, 9, 4),
    2560: (9, 3, 1),
    2592: (15, 12, 5),
    2624: (15, 10, 4),
    2656: (19, 11, 5),
    2688: (21, 10, 6),
    2720: (25, 18, 1),
    2752: (15, 4, 2),
    2784: (29, 21, 15),
    2816: (21, 19, 8),
    2848: (15, 8, 1),
    2880: (13, 10, 6),
    2912: (16, 9, 2),
    2944: (5, 3, 2),
    2976: (21, 10, 3),
    3008: (15, 13, 1),
    3040: (27, 21, 3),
    3072: (11, 10, 5),
    3104: (23, 9, 5),
    3136: (15, 12, 10),
    3168: (33, 31, 18),
    3200: (11, 6, 4),
    3232: (12, 9, 7),
    3264: (17, 5, 2),
    3296: (19, 14, 13),
    3328: (17, 9, 2),
    3360: (18, 15, 5),
    3392: (23, 13, 6),
    3424: (22, 15, 6),
    3456: (19, 18, 9),
    3488: (12, 11, 1),
    3520: (32, 29, 3),
    3552: (15, 9, 6),
    3584: (25, 12, 10),
    3616: (25, 18, 7),
    3648: (23, 7, 2),
    3680: (14, 13, 7),
    3712: (13, 12, 7),
    3744: (27, 14, 2),
    3776: (7, 5, 4),
    3808: (29, 18, 4),
    3840: (27, 9, 1),
    3872: (10, 3, 2),
    3904: (17, 13, 2),
    3936: (15, 5, 3),
    3968: (25, 18, 14),
    4000: (31, 18, 17),
    4032: (15, 13, 6),
    4064: (33, 29, 7),
    4096: (27, 15, 1),
}

VERIFIED = {
    32: 'primitive',
    64: 'primitive',
    96: 'primitive',
    128: 'primitive',
    160: 'primitive',
    192: 'primitive',
    224: 'primitive',
    256: 'primitive',
    288: 'primitive',
    320: 'primitive',
    352: 'primitive',
    384: 'primitive',
    416: 'irreducible',
    448: 'irreducible',
    480: 'primitive',
    512: 'primitive',
    544: 'irreducible',
    576: 'irreducible',
    608: 'irreducible',
    640: 'irreducible',
    672: 'primitive',
    704: 'primitive',
    736: 'irreducible',
    768: 'irreducible',
    800: 'irreducible',
    832: 'primitive',
    864: 'primitive',
    896: 'irreducible',
    928: 'irreducible',
    960: 'primitive',
    992: 'irreducible',
    1024: 'irreducible',
    1056: 'irreducible',
    1088: 'irreducible',
    1120: 'irreducible',
    1152: 'irreducible',
    1184: 'irreducible',
    1216: 'irreducible',
    1248: 'irreducible',
    1280: 'irreducible',
    1312: 'irreducible',
    1344: 'irreducible',
    1376: 'irreducible',
    1408: 'irreducible',
    1440: 'irreducible',
    1472: 'irreducible',
    1504: 'irreducible',
    1536: 'irreducible',
    1568: 'primitive',
    1600: 'irreducible',
    1632: 'irreducible',
    1664: 'irreducible',
    1696: 'irreducible',
    1728: 'irreducible',
    1760: 'irreducible',
    1792: 'irreducible',
    1824: 'irreducible',
    1856: 'irreducible',
    1888: 'irreducible',
    1920: 'primitive',
    1952: 'irreducible',
    1984: 'irreducible',
    2016: 'irreducible',
    2048: 'irreducible',
    2080: 'irreducible',
    2112: 'irreducible',
    2144: 'irreducible',
    2176: 'irreducible',
    2208: 'irreducible',
    2240: 'irreducible',
    2272: 'irreducible',
    2304: 'irreducible',
    2336: 'irreducible',
    2368: 'irreducible',
    2400: 'irreducible',
    2432: 'irreducible',
    2464: 'irreducible',
    2496: 'irreducible',
    2528: 'irreducible',
    2560: 'irreducible',
    2592: 'irreducible',
    2624: 'irreducible',
    2656: 'irreducible',
    2688: 'irreducible',
    2720: 'irreducible',
    2752: 'irreducible',
    2784: 'irreducible',
    2816: 'irreducible',
    2848: 'irreducible',
    2880: 'irreducible',
    2912: 'irreducible',
    2944: 'irreducible',
    2976: 'irreducible',
    3008: 'irreducible',
    3040: 'irreducible',
    3072: 'irreducible',
    3104: 'irreducible',
    3136: 'irreducible',
    3168: 'irreducible',
    3200: 'irreducible',
    3232: 'irreducible',
    3264: 'irreducible',
    3296: 'irreducible',
    3328: 'irreducible',
    3360: 'irreducible',
    3392: 'irreducible',
    3424: 'irreducible',
    3456: 'irreducible',
    3488: 'irreducible',
    3520: 'irreducible',
    3552: 'irreducible',
    3584: 'irreducible',
    3616: 'irreducible',
    3648: 'irreducible',
    3680: 'irreducible',
    3712: 'irreducible',
    3744: 'irreducible',
    3776: 'irreducible',
    3808: 'irreducible',
    3840: 'irreducible',
    3872: 'irreducible',
    3904: 'irreducible',
    3936: 'irreducible',
    3968: 'irreducible',
    4000: 'irreducible',
    4032: 'irreducible',
    4064: 'irreducible',
    4096: 'irreducible',
}
