method FindFirstOccurrence(arr: array<int>, target: int) returns (index: int)
    requires forall i, j :: 0 <= i < j < arr.Length ==> arr[i] <= arr[j]
    ensures 0 <= index < arr.Length ==> arr[index] == target
    ensures index == -1 ==> forall i :: 0 <= i < arr.Length ==> arr[i] != target
    ensures forall i :: 0 <= i < arr.Length ==> arr[i] == old(arr[i])
    ensures 0 <= index < arr.Length || index == -1
    ensures 0 <= index < arr.Length ==> ((forall i :: 0 <= i < index ==> arr[i] < arr[index]) && (forall j :: index <= j < arr.Length ==> arr[j] >= arr[index]))
{
    index := -1;
    for i := 0 to arr.Length
        invariant 0 <= i <= arr.Length
        invariant index == -1 ==> forall k :: 0 <= k < i ==> arr[k] != target
        invariant 0 <= index < i ==> arr[index] == target
        invariant forall k :: 0 <= k < arr.Length ==> arr[k] == old(arr[k])
    {
        if arr[i] == target
        {
            index := i;
            break;
        }
        if arr[i] > target
        {
            break;
        }
    }
}

method FindFirstOccurrence_EquivCheck(arr: array<int>, target: int)
  requires forall i, j :: 0 <= i < j < arr.Length ==> arr[i] <= arr[j]
{
  var index: int := *;
  assume 0 <= index < arr.Length ==> arr[index] == target;
  assume index == -1 ==> forall i :: 0 <= i < arr.Length ==> arr[i] != target;
  assume forall i :: 0 <= i < arr.Length ==> arr[i] == (arr[i]);
  assume 0 <= index < arr.Length || index == -1;
  assume 0 <= index < arr.Length ==> ((forall i :: 0 <= i < index ==> arr[i] < arr[index]) && (forall j :: index <= j < arr.Length ==> arr[j] >= arr[index]));
  var val_0 := FindFirstOccurrence(arr, target);
  assert index == val_0;
}
