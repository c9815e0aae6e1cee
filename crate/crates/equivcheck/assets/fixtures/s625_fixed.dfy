method SwapFirstAndLast(a: array<int>)
    requires a.Length > 0
    modifies a
    ensures a.Length == old(a.Length)
    ensures a[0] == old(a[a.Length - 1])
    ensures a[a.Length - 1] == old(a[0])
    ensures forall k :: 1 <= k < a.Length - 1 ==> a[k] == old(a[k])
{
    var tmp := a[0];
    a[0] := a[a.Length - 1];
    a[a.Length - 1] := tmp;
}
