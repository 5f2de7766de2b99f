# Simple line chart
import matplotlib.pyplot as plt
x = [1, 2, 3, 4]
plt.plot(x, color='red', linewidth=2)
plt.title('Sales')
plt.savefig('out.png')
