method IsPerfectSquare(n: int) returns (result: bool)
    requires n >= 0
    ensures result <==> (exists i: int :: 0 <= i <= n && i * i == n)
{
    var i := 0;
    while (i * i < n)
        invariant 0 <= i <= n
        invariant forall k :: 0 <= k < i ==> k * k < n
    {
        i := i + 1;
    }
    return i * i == n;
}

method IsPerfectSquare_EquivCheck(n: int)
  requires n >= 0
{
  var result: bool := *;
  assume result <==> (exists i: int :: 0 <= i <= n && i * i == n);
  var val_0 := IsPerfectSquare(n);
  assert result == val_0;
}
