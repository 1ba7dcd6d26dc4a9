package com.vuldroid.application;

import android.content.Intent;
import android.os.Bundle;
import android.widget.Button;
import android.widget.EditText;
import android.widget.Toast;

import androidx.appcompat.app.AppCompatActivity;

public class Login extends AppCompatActivity {

    private static final String ADMIN_USER = "admin";
    private static final String ADMIN_PASSWORD = "vuldroid@123";
    private static final String API_KEY = "AIzaSyD-vuldroid-demo-key";

    @Override
    protected void onCreate(Bundle savedInstanceState) {
        super.onCreate(savedInstanceState);
        setContentView(R.layout.activity_login);

        EditText user = findViewById(R.id.username);
        EditText pass = findViewById(R.id.password);
        Button login = findViewById(R.id.loginButton);
        login.setOnClickListener(v -> {
            if (ADMIN_USER.equals(user.getText().toString())
                    && ADMIN_PASSWORD.equals(pass.getText().toString())) {
                startActivity(new Intent(this, MainActivity.class));
            } else {
                Toast.makeText(this, "Invalid credentials", Toast.LENGTH_SHORT).show();
            }
        });
    }
}
