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

method SwapFirstAndLast_EquivCheck(a: array<int>)
  requires a.Length > 0
  modifies a
{
  ghost var a_old := a[..];
  var a_spec: array<int> := *;
  assume a_spec.Length == |a_old|;
  assume a_spec[0] == a_old[|a_old| - 1];
  assume a_spec[a_spec.Length - 1] == a_old[0];
  assume forall k :: 1 <= k < a_spec.Length - 1 ==> a_spec[k] == a_old[k];
  SwapFirstAndLast(a);
  assert a_spec.Length == a.Length;
  assert a_spec[..] == a[..];
}
