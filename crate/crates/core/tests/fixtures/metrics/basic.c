/* basic arithmetic */
int add(int a, int b)
{
    return a + b;
}

void assign(void)
{
    a = b + c;
}
