static const char *name(int code)
{
    /* map a code
       to a label */
    switch (code) {
    case 0:
        return "zero";
    case 1:
        return "one";
    default:
        break;
    }

    return code < 0 ? "negative" : "many";
}

struct pair { int a; int b; };

long scale(long x)
{
    x *= 2; // double it
    x = x >> 1;
    return x - 'a';
}
